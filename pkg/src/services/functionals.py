"""
Evaluation of drift/diffusion functionals and the built-in model families.

HOW EVALUATION WORKS:
--------------------
Every expression is evaluated against a WindowBatch: an array of history
windows with shape (..., m+1). A single HistorySegment is a batch with no
leading axes; the simulator passes one window per path, the likelihood one
window per time step. Integral leaves are computed with the trapezoid rule
along the last axis, and leaves that do not depend on the parameters are
cached on the batch so an optimiser can re-evaluate cheaply.

MODEL FAMILIES:
--------------
    make_ho_gbm      dy = a * I dt + b * I dW          (I = moving integral)
    make_ho_ou       dy = -theta * I dt + sigma dW
    make_ewma_vol    dy = drift dt + sqrt(int lam^(x-(t-tau)) s2(x) dx) dW
    make_weighted_vol  the same with any weight function
"""

import logging
from collections.abc import Mapping

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.integrate import trapezoid

from src.core.errors import ConfigError, NumericalError
from src.models.functional import (
    Add,
    Const,
    ConstantWeight,
    CurrentValue,
    ExponentialWeight,
    FunctionalExpr,
    ModelSpec,
    MovingIntegral,
    Mul,
    Neg,
    Param,
    Parameter,
    PolynomialWeight,
    Pow,
    Sqrt,
    WeightedMovingIntegral,
    WeightFunction,
)
from src.models.history import HistorySegment

logger = logging.getLogger(__name__)

# Diffusion values in [-DIFFUSION_CLAMP, 0) are rounding noise and become 0.
DIFFUSION_CLAMP = 1e-12


class ModelError(ConfigError):
    """Invalid model definition or parameter value."""

    pass


class DiffusionError(NumericalError):
    """The diffusion (or a square-root argument) went negative."""

    pass


# -------------------------------- Weight functions --------------------------------


def _resolve(value: float | str, params: Mapping[str, float]) -> float:
    if isinstance(value, str):
        try:
            return float(params[value])
        except KeyError:
            raise ModelError(f"unresolved parameter '{value}'") from None
    return float(value)


def weight_values(
    weight: WeightFunction,
    u: np.ndarray,
    tau: float,
    params: Mapping[str, float] | None = None,
) -> np.ndarray:
    """
    Evaluate a weight function at normalised window positions u in [0, 1].

    u = 0 is the oldest point t - tau, u = 1 the current time t.
    """
    params = params or {}
    u = np.asarray(u, dtype=float)
    if isinstance(weight, ConstantWeight):
        return np.full_like(u, _resolve(weight.c, params))
    if isinstance(weight, ExponentialWeight):
        lam = _resolve(weight.lam, params)
        if not lam > 0 or lam == 1.0:
            raise ModelError(f"exponential weight needs lam > 0 and lam != 1, got {lam}")
        offset = (1.0 - u) * tau if weight.reverse else u * tau
        return np.power(lam, offset)
    if isinstance(weight, PolynomialWeight):
        coeffs = [_resolve(c, params) for c in weight.coeffs]
        return P.polyval(u, coeffs)
    raise ModelError(f"unknown weight function {weight!r}")


def _is_fixed(weight: WeightFunction) -> bool:
    if isinstance(weight, ConstantWeight):
        return not isinstance(weight.c, str)
    if isinstance(weight, ExponentialWeight):
        return not isinstance(weight.lam, str)
    return not any(isinstance(c, str) for c in weight.coeffs)


# -------------------------------- Window batches --------------------------------


class WindowBatch:
    """
    A stack of history windows sharing one grid.

    Args:
        windows: array (..., m+1) of state samples, oldest first
        dt: grid spacing
        tau: window length (= m * dt)
        sigma2: optional array of the same shape holding the auxiliary
            squared-diffusion history
    """

    def __init__(
        self,
        windows: np.ndarray,
        dt: float,
        tau: float,
        sigma2: np.ndarray | None = None,
    ):
        self.windows = windows
        self.dt = dt
        self.tau = tau
        self.sigma2 = sigma2
        self.shape = windows.shape[:-1]
        self._cache: dict = {}
        self._u = np.linspace(0.0, 1.0, windows.shape[-1])

    @classmethod
    def from_segment(cls, H: HistorySegment, sigma2: HistorySegment | None = None) -> "WindowBatch":
        aux = None
        if sigma2 is not None:
            _check_same_grid(H, sigma2)
            aux = sigma2.samples
        return cls(H.samples, H.dt, H.tau, aux)

    def current(self) -> np.ndarray:
        return self.windows[..., -1]

    def moving_integral(self) -> np.ndarray:
        key = ("moving_integral",)
        if key not in self._cache:
            self._cache[key] = trapezoid(self.windows, dx=self.dt, axis=-1)
        return self._cache[key]

    def weighted_integral(
        self,
        weight: WeightFunction,
        source: str,
        params: Mapping[str, float],
    ) -> np.ndarray:
        fixed = _is_fixed(weight)
        key = ("weighted_integral", source, weight)
        if fixed and key in self._cache:
            return self._cache[key]

        if source == "sigma2":
            if self.sigma2 is None:
                raise ModelError("model reads the sigma2 history but none was supplied")
            values = self.sigma2
        else:
            values = self.windows
        w = weight_values(weight, self._u, self.tau, params)
        result = trapezoid(values * w, dx=self.dt, axis=-1)
        if fixed:
            self._cache[key] = result
        return result


def _check_same_grid(a: HistorySegment, b: HistorySegment) -> None:
    if (
        a.samples.size != b.samples.size
        or not np.isclose(a.tau, b.tau, rtol=1e-9, atol=0.0)
        or not np.isclose(a.t_end, b.t_end, rtol=1e-9, atol=1e-12)
    ):
        raise ModelError("sigma2 history must share the state history's grid")


# -------------------------------- Evaluation --------------------------------


def _evaluate(expr: FunctionalExpr, batch: WindowBatch, params: Mapping[str, float]):
    if isinstance(expr, Const):
        return expr.value
    if isinstance(expr, Param):
        return _resolve(expr.name, params)
    if isinstance(expr, CurrentValue):
        return batch.current()
    if isinstance(expr, MovingIntegral):
        return batch.moving_integral()
    if isinstance(expr, WeightedMovingIntegral):
        return batch.weighted_integral(expr.weight, expr.source, params)
    if isinstance(expr, Add):
        total = _evaluate(expr.terms[0], batch, params)
        for term in expr.terms[1:]:
            total = total + _evaluate(term, batch, params)
        return total
    if isinstance(expr, Mul):
        product = _evaluate(expr.factors[0], batch, params)
        for factor in expr.factors[1:]:
            product = product * _evaluate(factor, batch, params)
        return product
    if isinstance(expr, Neg):
        return -_evaluate(expr.arg, batch, params)
    if isinstance(expr, Pow):
        base = _evaluate(expr.arg, batch, params)
        with np.errstate(invalid="ignore", divide="ignore"):
            result = np.power(base, expr.exponent)
        if not np.all(np.isfinite(result)):
            raise NumericalError(f"Pow(exponent={expr.exponent}) produced non-finite values")
        return result
    if isinstance(expr, Sqrt):
        arg = _evaluate(expr.arg, batch, params)
        if np.any(np.asarray(arg) < 0):
            raise DiffusionError(f"negative Sqrt argument {np.min(arg):.6g}")
        return np.sqrt(arg)
    raise ModelError(f"unknown expression node {expr!r}")


def evaluate_batch(
    expr: FunctionalExpr,
    batch: WindowBatch,
    params: Mapping[str, float],
) -> np.ndarray:
    """Evaluate an expression on every window of a batch (result shape = batch.shape)."""
    value = _evaluate(expr, batch, params)
    return np.broadcast_to(np.asarray(value, dtype=float), batch.shape)


def eval_functional(
    expr: FunctionalExpr,
    H: HistorySegment,
    params: Mapping[str, float] | None = None,
    sigma2: HistorySegment | None = None,
) -> float:
    """
    Evaluate a functional expression on one history segment.

    Args:
        expr: the expression tree
        H: the state history
        params: values for Param leaves and named weight coefficients
        sigma2: auxiliary squared-diffusion history (EWMA-type models only)

    Raises:
        ModelError: a parameter name cannot be resolved
        DiffusionError: a Sqrt argument is negative
    """
    batch = WindowBatch.from_segment(H, sigma2)
    return float(evaluate_batch(expr, batch, params or {}))


def _check_tau(model: ModelSpec, tau: float) -> None:
    if not np.isclose(model.tau, tau, rtol=1e-9, atol=0.0):
        raise ModelError(f"history window {tau} does not match model order {model.tau}")


def drift_values(model: ModelSpec, batch: WindowBatch) -> np.ndarray:
    return evaluate_batch(model.drift, batch, model.param_values)


def diffusion_values(model: ModelSpec, batch: WindowBatch) -> np.ndarray:
    """Diffusion on a batch; tiny negative rounding is clamped to zero."""
    values = evaluate_batch(model.diffusion, batch, model.param_values)
    if not np.all(np.isfinite(values)):
        raise DiffusionError("diffusion evaluated to a non-finite value")
    low = float(np.min(values)) if values.size else 0.0
    if low < -DIFFUSION_CLAMP:
        raise DiffusionError(f"negative diffusion {low:.6g} in model '{model.name}'")
    if low < 0.0:
        values = np.where(values < 0.0, 0.0, values)
    return values


def drift(model: ModelSpec, H: HistorySegment, sigma2: HistorySegment | None = None) -> float:
    """nu(H): the drift of `model` at history H."""
    _check_tau(model, H.tau)
    return float(drift_values(model, WindowBatch.from_segment(H, sigma2)))


def diffusion(model: ModelSpec, H: HistorySegment, sigma2: HistorySegment | None = None) -> float:
    """varsigma(H): the diffusion of `model` at history H (never negative)."""
    _check_tau(model, H.tau)
    return float(diffusion_values(model, WindowBatch.from_segment(H, sigma2)))


# -------------------------------- Model families --------------------------------


def _check_order(tau: float) -> None:
    if not tau > 0:
        raise ModelError(f"order tau must be positive, got {tau}")


def make_ho_gbm(alpha: float, beta: float, tau: float) -> ModelSpec:
    """Higher-order geometric Brownian motion: dy = alpha*I dt + beta*I dW."""
    _check_order(tau)
    if beta < 0:
        raise ModelError(f"beta must be non-negative, got {beta}")
    return ModelSpec(
        name="ho_gbm",
        tau=tau,
        drift=Param(name="alpha") * MovingIntegral(),
        diffusion=Param(name="beta") * MovingIntegral(),
        params={
            "alpha": Parameter(value=alpha),
            "beta": Parameter(value=beta, lower=0.0),
        },
    )


def make_ho_ou(theta: float, sigma: float, tau: float) -> ModelSpec:
    """Higher-order Ornstein-Uhlenbeck: dy = -theta*I dt + sigma dW."""
    _check_order(tau)
    if sigma < 0:
        raise ModelError(f"sigma must be non-negative, got {sigma}")
    return ModelSpec(
        name="ho_ou",
        tau=tau,
        drift=-(Param(name="theta") * MovingIntegral()),
        diffusion=Param(name="sigma"),
        params={
            "theta": Parameter(value=theta),
            "sigma": Parameter(value=sigma, lower=0.0),
        },
    )


def make_weighted_vol(
    weight: WeightFunction,
    tau: float,
    drift: FunctionalExpr,
    params: Mapping[str, Parameter] | None = None,
    name: str = "weighted_vol",
) -> ModelSpec:
    """
    Weighted-moving-average volatility model.

    diffusion = sqrt( integral of w(x) * s2(x) over the window ), where s2 is
    the running history of realised squared diffusion values.
    """
    _check_order(tau)
    return ModelSpec(
        name=name,
        tau=tau,
        drift=drift,
        diffusion=Sqrt(arg=WeightedMovingIntegral(weight=weight, source="sigma2")),
        params=dict(params or {}),
    )


def make_ewma_vol(
    lam: float,
    tau: float,
    drift: FunctionalExpr,
    drift_params: Mapping[str, Parameter] | None = None,
    reverse_weights: bool = False,
) -> ModelSpec:
    """
    EWMA volatility model with weight lam ** (x - (t - tau)).

    The decay is stored as the parameter "lambda" so it can be fitted.
    `reverse_weights=True` switches to lam ** (t - x).
    """
    if not lam > 0 or lam == 1.0:
        raise ModelError(f"lambda must be > 0 and != 1, got {lam}")
    params = {"lambda": Parameter(value=lam, lower=0.0)}
    params.update(drift_params or {})
    return make_weighted_vol(
        ExponentialWeight(lam="lambda", reverse=reverse_weights),
        tau,
        drift,
        params=params,
        name="ewma_vol",
    )
