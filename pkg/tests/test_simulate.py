import numpy as np
import pytest
from pydantic import ValidationError
from scipy.integrate import solve_ivp

from src.models.functional import Const, CurrentValue, ModelSpec
from src.models.simulation import SimConfig
from src.services.functionals import diffusion, make_ewma_vol, make_ho_ou
from src.services.history import constant_history
from src.services.simulate import (
    DivergenceError,
    SimulationError,
    path_normals,
    simulate_ensemble,
    simulate_path,
)


def delay_reference(theta: float, times: np.ndarray) -> np.ndarray:
    """
    y' = -theta * integral of y over [t-1, t] with y = 1 before 0.

    Method of steps: on [k, k+1] carry z = integral of y over [t-1, t], whose
    derivative y(t) - y(t-1) reads the previous interval's dense solution.
    """
    lagged = lambda t: 1.0  # noqa: E731
    state = [1.0, 1.0]
    pieces = []
    for k in range(int(np.ceil(times[-1]))):
        sol = solve_ivp(
            lambda t, s, lag=lagged: [-theta * s[1], s[0] - lag(t - 1.0)],
            (k, k + 1),
            state,
            dense_output=True,
            rtol=1e-11,
            atol=1e-13,
        )
        pieces.append(sol)
        lagged = lambda t, sol=sol: sol.sol(t)[0]  # noqa: E731
        state = sol.y[:, -1]
    index = np.minimum(times.astype(int), len(pieces) - 1)
    return np.array([pieces[i].sol(t)[0] for i, t in zip(index, times)])


class TestNoise:
    def test_offset_continues_the_stream(self):
        full = path_normals(5, 0, 3, 14)
        np.testing.assert_array_equal(path_normals(5, 0, 3, 10, offset=4), full[4:])

    def test_streams_and_paths_differ(self):
        a = path_normals(5, 0, 0, 8)
        assert not np.array_equal(a, path_normals(5, 1, 0, 8))
        assert not np.array_equal(a, path_normals(5, 0, 1, 8))
        np.testing.assert_array_equal(a, path_normals(5, 0, 0, 8))


class TestConfig:
    def test_horizon_at_least_one_step(self):
        with pytest.raises(ValidationError):
            SimConfig(dt=0.1, horizon=0.05)

    def test_n_steps(self):
        assert SimConfig(dt=0.01, horizon=2.0).n_steps == 200


class TestSimulation:
    def test_zero_noise_zero_drift_is_constant(self):
        model = ModelSpec(tau=1.0, drift=Const(value=0.0), diffusion=Const(value=0.0))
        init = constant_history(2.5, tau=1.0, dt=0.1)
        path = simulate_path(model, init, SimConfig(dt=0.1, horizon=3.0, seed=9))
        assert path.values.tolist() == [2.5] * 31
        assert path.times[0] == init.t_end
        assert path.terminal == 2.5

    def test_same_seed_same_paths(self, ho_ou, flat_history):
        cfg = SimConfig(dt=0.01, horizon=1.0, n_paths=6, seed=123)
        first = simulate_ensemble(ho_ou, flat_history, cfg)
        second = simulate_ensemble(ho_ou, flat_history, cfg)
        for a, b in zip(first, second):
            np.testing.assert_array_equal(a.values, b.values)

    def test_worker_count_does_not_change_paths(self, ho_ou, flat_history, monkeypatch):
        monkeypatch.setenv("HOMP_PATH_CHUNK_SIZE", "3")
        cfg = SimConfig(dt=0.01, horizon=0.5, n_paths=10, seed=4)
        serial = simulate_ensemble(ho_ou, flat_history, cfg, max_workers=1)
        threaded = simulate_ensemble(ho_ou, flat_history, cfg, max_workers=4)
        for a, b in zip(serial, threaded):
            np.testing.assert_array_equal(a.values, b.values)

    def test_ensemble_member_matches_single_path(self, ho_ou, flat_history):
        cfg = SimConfig(dt=0.01, horizon=0.5, n_paths=4, seed=77)
        paths = simulate_ensemble(ho_ou, flat_history, cfg)
        single = simulate_path(ho_ou, flat_history, cfg, path_index=2)
        np.testing.assert_array_equal(paths[2].values, single.values)
        assert not np.allclose(paths[0].values, paths[1].values)

    def test_pure_diffusion_variance(self):
        s, T = 0.3, 2.0
        model = ModelSpec(tau=0.1, drift=Const(value=0.0), diffusion=Const(value=s))
        init = constant_history(0.0, tau=0.1, dt=0.01)
        cfg = SimConfig(dt=0.01, horizon=T, n_paths=10_000, seed=2024)
        paths = simulate_ensemble(model, init, cfg)
        increments = np.array([p.terminal - p.values[0] for p in paths])
        assert np.var(increments, ddof=1) == pytest.approx(s * s * T, rel=0.05)

    def test_deterministic_delay_dynamics(self):
        theta = 0.5
        model = make_ho_ou(theta, 0.0, 1.0)

        def sup_error(dt):
            init = constant_history(1.0, tau=1.0, dt=dt)
            path = simulate_path(model, init, SimConfig(dt=dt, horizon=2.0))
            return np.max(np.abs(path.values - delay_reference(theta, path.times)))

        coarse = sup_error(1e-3)
        fine = sup_error(5e-4)
        assert coarse < 5e-3
        assert 1.5 <= coarse / fine <= 2.5

    def test_reference_matches_closed_form_on_first_interval(self):
        # on [0, 1] the lag is the flat history, so y = 1 - sqrt(theta) * sin(sqrt(theta) * t)
        theta = 0.5
        times = np.linspace(0.0, 1.0, 5)
        expected = 1.0 - np.sqrt(theta) * np.sin(np.sqrt(theta) * times)
        np.testing.assert_allclose(delay_reference(theta, times), expected, atol=1e-8)

    def test_ho_ou_mean_stays_at_zero(self, ho_ou):
        init = constant_history(0.0, tau=1.0, dt=0.01)
        cfg = SimConfig(dt=0.01, horizon=5.0, n_paths=4000, seed=55)
        terminal = np.array([p.terminal for p in simulate_ensemble(ho_ou, init, cfg)])
        std_error = terminal.std(ddof=1) / np.sqrt(terminal.size)
        assert abs(terminal.mean()) <= 3 * std_error

    def test_strong_order_one_for_the_delay_equation(self):
        theta = 0.5
        model = make_ho_ou(theta, 0.0, 1.0)
        exact = delay_reference(theta, np.array([2.0]))[0]

        errors = []
        for dt in (1e-2, 5e-3, 2.5e-3):
            init = constant_history(1.0, tau=1.0, dt=dt)
            path = simulate_path(model, init, SimConfig(dt=dt, horizon=2.0))
            errors.append(abs(path.terminal - exact))
        for coarse, fine in zip(errors, errors[1:]):
            assert 1.7 <= coarse / fine <= 2.3

    def test_ewma_records_realized_sigma2(self):
        model = make_ewma_vol(0.5, 1.0, Const(value=0.0))
        init = constant_history(0.0, tau=1.0, dt=0.1)
        sigma2 = constant_history(1.0, tau=1.0, dt=0.1)
        path = simulate_path(model, init, SimConfig(dt=0.1, horizon=1.0, seed=1), sigma2_init=sigma2)
        assert path.realized_sigma2.size == 10
        assert path.realized_sigma2[0] == pytest.approx(diffusion(model, init, sigma2) ** 2)

    def test_divergence_detected(self):
        model = ModelSpec(
            tau=0.1, drift=CurrentValue() * CurrentValue(), diffusion=Const(value=0.0)
        )
        init = constant_history(10.0, tau=0.1, dt=0.1)
        with pytest.raises(DivergenceError):
            simulate_path(model, init, SimConfig(dt=0.1, horizon=2.0))


class TestSetupErrors:
    def test_history_window_must_match_order(self, ho_ou):
        init = constant_history(1.0, tau=2.0, dt=0.1)
        with pytest.raises(SimulationError):
            simulate_path(ho_ou, init, SimConfig(dt=0.1, horizon=1.0))

    def test_history_grid_must_match_step(self, ho_ou, flat_history):
        with pytest.raises(SimulationError):
            simulate_path(ho_ou, flat_history, SimConfig(dt=0.02, horizon=1.0))

    def test_horizon_must_be_whole_steps(self, ho_ou, flat_history):
        with pytest.raises(SimulationError):
            simulate_path(ho_ou, flat_history, SimConfig(dt=0.01, horizon=0.015))

    def test_ewma_needs_sigma2_history(self):
        model = make_ewma_vol(0.5, 1.0, Const(value=0.0))
        init = constant_history(0.0, tau=1.0, dt=0.1)
        with pytest.raises(SimulationError):
            simulate_path(model, init, SimConfig(dt=0.1, horizon=1.0))

    def test_path_serialises_to_lists(self, ho_ou, flat_history):
        path = simulate_path(ho_ou, flat_history, SimConfig(dt=0.01, horizon=0.05))
        dumped = path.model_dump()
        assert isinstance(dumped["values"], list)
        assert len(dumped["values"]) == 6
