import math

import numpy as np
import pytest
from pydantic import ValidationError

from src.models.estimation import Dataset, FitOptions
from src.models.functional import Const, ModelSpec
from src.models.simulation import SimConfig
from src.services.estimate import (
    EstimationError,
    LikelihoodSurface,
    NoFiniteLikelihoodError,
    fit_mle,
    interpolate_dataset,
    log_likelihood,
    maximize,
    partition_blocks,
)
from src.services.functionals import make_ewma_vol, make_ho_ou
from src.services.history import constant_history
from src.services.inference import DegenerateDensityError, transition_logdensity
from src.services.simulate import simulate_ensemble


def series_dataset(values, dt):
    values = np.asarray(values, dtype=float)
    return Dataset(times=dt * np.arange(values.size), values=values)


def ho_ou_datasets(n_paths, n_steps, seed, theta=0.5, sigma=0.2, dt=0.01):
    model = make_ho_ou(theta, sigma, 1.0)
    init = constant_history(0.0, tau=1.0, dt=dt)
    cfg = SimConfig(dt=dt, horizon=n_steps * dt, n_paths=n_paths, seed=seed)
    return [Dataset(times=p.times, values=p.values) for p in simulate_ensemble(model, init, cfg)]


def quadratic(theta):
    return -((theta["a"] - 1.3) ** 2 + 2.0 * (theta["b"] + 0.7) ** 2)


class TestDataset:
    def test_from_pairs(self):
        data = Dataset.from_pairs([(0.0, 1.0), (0.5, 2.0)])
        assert data.times.tolist() == [0.0, 0.5]
        assert len(data) == 2

    def test_times_strictly_increasing(self):
        with pytest.raises(ValidationError):
            Dataset(times=[0.0, 0.0], values=[1.0, 2.0])

    def test_needs_two_observations(self):
        with pytest.raises(ValidationError):
            Dataset(times=[0.0], values=[1.0])

    def test_values_finite(self):
        with pytest.raises(ValidationError):
            Dataset(times=[0.0, 1.0], values=[1.0, float("inf")])


class TestInterpolation:
    def test_on_grid_data_is_unchanged(self):
        data = series_dataset([1.0, -2.0, 0.5, 4.0], dt=0.25)
        series = interpolate_dataset(data, 0.25)
        assert series.values.tolist() == [1.0, -2.0, 0.5, 4.0]

    def test_line(self):
        data = Dataset.from_pairs([(0.0, 0.0), (2.0, 2.0)])
        assert interpolate_dataset(data, 1.0).values.tolist() == [0.0, 1.0, 2.0]

    def test_irregular_constant_data(self):
        data = Dataset(times=[0.0, 0.9, 1.7, 3.0], values=[1.0, 1.0, 1.0, 1.0])
        series = interpolate_dataset(data, 0.5)
        assert series.values.tolist() == [1.0] * 7
        assert series.grid.t_end == pytest.approx(3.0)

    def test_span_shorter_than_a_step(self):
        data = Dataset.from_pairs([(0.0, 1.0), (0.4, 1.0)])
        with pytest.raises(EstimationError):
            interpolate_dataset(data, 0.5)


class TestPartition:
    def test_whole_blocks(self):
        series = interpolate_dataset(series_dataset(np.arange(31.0), 0.1), 0.1)
        partition = partition_blocks(series, 1.0)
        assert len(partition.blocks) == 3
        assert partition.remainder is None
        for left, right in zip(partition.blocks, partition.blocks[1:]):
            assert left.samples[-1] == right.samples[0]
            assert right.t_start == pytest.approx(left.t_end)

    def test_short_remainder(self):
        series = interpolate_dataset(series_dataset(np.arange(26.0), 0.1), 0.1)
        partition = partition_blocks(series, 1.0)
        assert len(partition.blocks) == 2
        assert partition.remainder is not None
        assert partition.remainder.tau == pytest.approx(0.5)
        assert partition.remainder.samples[0] == partition.blocks[-1].samples[-1]
        assert len(partition.segments) == 3

    def test_too_short(self):
        series = interpolate_dataset(series_dataset(np.arange(16.0), 0.1), 0.1)
        with pytest.raises(EstimationError):
            partition_blocks(series, 1.0)

    def test_step_must_divide_tau(self):
        series = interpolate_dataset(series_dataset(np.arange(40.0), 0.3), 0.3)
        with pytest.raises(EstimationError):
            partition_blocks(series, 1.0)


class TestLogLikelihood:
    def test_flat_series_is_standard_normal_at_zero(self, pure_noise):
        data = series_dataset([3.0, 3.0, 3.0], dt=1.0)
        value = log_likelihood(pure_noise, data, FitOptions(dt=1.0))
        assert value == pytest.approx(-0.918939, abs=1e-6)

    def test_block_additivity(self, ho_ou):
        data = ho_ou_datasets(1, 300, seed=5)[0]
        opts = FitOptions(dt=0.01)
        blocks = partition_blocks(interpolate_dataset(data, 0.01), 1.0).blocks
        assert len(blocks) == 3
        pairwise = transition_logdensity(ho_ou, blocks[0], blocks[1]) + transition_logdensity(
            ho_ou, blocks[1], blocks[2]
        )
        assert log_likelihood(ho_ou, data, opts) == pytest.approx(pairwise, rel=1e-12)

    def test_pair_terms_include_remainder(self, ho_ou):
        data = ho_ou_datasets(1, 250, seed=6)[0]
        surface = LikelihoodSurface(data, 1.0, 0.01)
        segments = surface.partition.segments
        pairs = surface.pair_terms(ho_ou)
        assert pairs.size == 2
        assert pairs[-1] == pytest.approx(
            transition_logdensity(ho_ou, segments[1], segments[2]), rel=1e-12
        )
        assert surface.n_steps == 150

    def test_degenerate_diffusion(self):
        model = make_ho_ou(0.5, 0.0, 1.0)
        data = series_dataset(np.ones(30), 0.1)
        with pytest.raises(DegenerateDensityError):
            log_likelihood(model, data, FitOptions(dt=0.1))

    def test_true_parameters_preferred(self):
        datasets = ho_ou_datasets(50, 10_000, seed=100)
        true_model = make_ho_ou(0.5, 0.2, 1.0)
        opts = FitOptions(dt=0.01)
        wins = 0
        totals = {0.25: 0.0, 0.5: 0.0, 0.75: 0.0, 1.5: 0.0}
        for data in datasets:
            surface = LikelihoodSurface(data, 1.0, opts.dt)
            at = {theta: surface(true_model.with_params({"theta": theta})) for theta in totals}
            wins += at[0.5] > at[1.5]
            for theta, value in at.items():
                totals[theta] += value / len(datasets)
        assert wins >= 45
        assert totals[0.5] > totals[0.25]
        assert totals[0.5] > totals[0.75]
        assert totals[0.5] > totals[1.5]

    def test_ewma_likelihood_uses_initial_sigma2(self):
        model = make_ewma_vol(0.5, 1.0, Const(value=0.0))
        rng = np.random.default_rng(1)
        data = series_dataset(np.cumsum(rng.normal(scale=0.1, size=301)), 0.01)
        low = log_likelihood(model, data, FitOptions(dt=0.01, initial_sigma2=0.01))
        high = log_likelihood(model, data, FitOptions(dt=0.01, initial_sigma2=4.0))
        assert math.isfinite(low) and math.isfinite(high)
        assert low != high


class TestMaximize:
    def test_quadratic_surrogate(self):
        opts = FitOptions(dt=1.0, xatol=1e-9, fatol=1e-14)
        result = maximize(quadratic, opts, {"a": 0.0, "b": 0.0})
        assert result.theta_hat["a"] == pytest.approx(1.3, abs=1e-4)
        assert result.theta_hat["b"] == pytest.approx(-0.7, abs=1e-4)
        assert result.converged
        assert result.loglik == pytest.approx(quadratic(result.theta_hat))

    def test_restarts(self):
        opts = FitOptions(dt=1.0, n_restarts=3, seed=8)
        result = maximize(quadratic, opts, {"a": 0.0, "b": 0.0})
        assert len(result.restart_logliks) == 3
        assert result.loglik == max(result.restart_logliks)

    def test_trace_is_monotone(self):
        result = maximize(quadratic, FitOptions(dt=1.0, n_restarts=2), {"a": 5.0, "b": 5.0})
        assert len(result.trace) == result.n_evals
        assert all(b >= a for a, b in zip(result.trace, result.trace[1:]))

    def test_bounds_are_respected(self):
        bounds = {"a": (None, 1.0), "b": (-0.5, 0.5)}
        result = maximize(quadratic, FitOptions(dt=1.0), {"a": 0.0, "b": 0.0}, bounds)
        assert result.theta_hat["a"] <= 1.0
        assert -0.5 <= result.theta_hat["b"] <= 0.5
        assert result.theta_hat["a"] == pytest.approx(1.0, abs=1e-3)
        assert result.theta_hat["b"] == pytest.approx(-0.5, abs=1e-3)

    def test_start_outside_bounds(self):
        with pytest.raises(EstimationError):
            maximize(quadratic, FitOptions(dt=1.0), {"a": 2.0, "b": 0.0}, {"a": (None, 1.0)})

    def test_grid_search(self):
        opts = FitOptions(
            dt=1.0,
            optimizer="grid-search",
            grid={"a": [0.0, 1.0, 1.5, 2.0], "b": [-1.0, -0.5, 0.0]},
        )
        result = maximize(quadratic, opts, {"a": 0.0, "b": 0.0})
        assert result.theta_hat == {"a": 1.5, "b": -0.5}
        assert result.n_evals == 12

    def test_grid_search_needs_a_lattice(self):
        with pytest.raises(ValidationError):
            FitOptions(dt=1.0, optimizer="grid-search")

    def test_nothing_finite(self):
        with pytest.raises(NoFiniteLikelihoodError):
            maximize(lambda theta: float("nan"), FitOptions(dt=1.0, max_evals=20), {"a": 0.0})

    def test_errors_count_as_minus_infinity(self):
        def objective(theta):
            if theta["a"] < 0:
                raise EstimationError("outside support")
            return -((theta["a"] - 2.0) ** 2)

        result = maximize(objective, FitOptions(dt=1.0, xatol=1e-8, fatol=1e-12), {"a": 0.5})
        assert result.theta_hat["a"] == pytest.approx(2.0, abs=1e-4)

    def test_single_evaluation_does_not_converge(self):
        result = maximize(quadratic, FitOptions(dt=1.0, max_evals=1), {"a": 0.0, "b": 0.0})
        assert not result.converged
        assert math.isfinite(result.loglik)


class TestFit:
    def test_fit_is_reproducible_and_consistent(self, ho_ou):
        data = ho_ou_datasets(1, 2000, seed=9)[0]
        opts = FitOptions(dt=0.01, n_restarts=2, seed=4, xatol=1e-4, fatol=1e-4)
        first = fit_mle(ho_ou, data, opts)
        second = fit_mle(ho_ou, data, opts)
        assert first == second
        refit = log_likelihood(ho_ou.with_params(first.theta_hat), data, opts)
        assert first.loglik == pytest.approx(refit, rel=1e-12)
        assert first.theta_hat["sigma"] >= 0.0

    def test_constructor_family_needs_initial(self):
        data = ho_ou_datasets(1, 300, seed=1)[0]
        family = lambda theta: make_ho_ou(theta["theta"], theta["sigma"], 1.0)  # noqa: E731
        with pytest.raises(EstimationError):
            fit_mle(family, data, FitOptions(dt=0.01))
        result = fit_mle(
            family,
            data,
            FitOptions(
                dt=0.01,
                initial={"theta": 0.5, "sigma": 0.3},
                bounds={"sigma": (1e-6, None)},
                max_evals=200,
            ),
        )
        assert set(result.theta_hat) == {"theta", "sigma"}

    def test_unknown_option_names(self, ho_ou):
        data = ho_ou_datasets(1, 300, seed=1)[0]
        with pytest.raises(EstimationError):
            fit_mle(ho_ou, data, FitOptions(dt=0.01, initial={"kappa": 1.0}))

    def test_parameter_recovery(self):
        datasets = ho_ou_datasets(10, 100_000, seed=2025)
        model = make_ho_ou(0.3, 0.3, 1.0)
        opts = FitOptions(dt=0.01, xatol=1e-4, fatol=1e-3)
        good = 0
        for data in datasets:
            result = fit_mle(model, data, opts)
            theta_ok = abs(result.theta_hat["theta"] - 0.5) <= 0.2 * 0.5
            sigma_ok = abs(result.theta_hat["sigma"] - 0.2) <= 0.1 * 0.2
            good += theta_ok and sigma_ok
        assert good >= 8

