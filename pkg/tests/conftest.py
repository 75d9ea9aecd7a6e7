"""Shared fixtures for the test suite."""

import pytest

from src.core.config import get_settings
from src.models.functional import Const, ModelSpec
from src.services.functionals import make_ho_ou
from src.services.history import constant_history


@pytest.fixture(autouse=True)
def fresh_settings():
    """Settings are cached; drop the cache so monkeypatched env vars take effect."""
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture
def ho_ou():
    """HO-OU(theta=0.5, sigma=0.2, tau=1)."""
    return make_ho_ou(0.5, 0.2, 1.0)


@pytest.fixture
def flat_history():
    """H = 1 on [-1, 0] sampled every 0.01."""
    return constant_history(1.0, tau=1.0, dt=0.01)


@pytest.fixture
def pure_noise():
    """dy = 0 dt + 1 dW with order 1."""
    return ModelSpec(name="noise", tau=1.0, drift=Const(value=0.0), diffusion=Const(value=1.0))
