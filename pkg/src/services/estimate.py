"""
Maximum-likelihood estimation from discrete observations.

HOW THIS WORKS:
---------------
1. interpolate_dataset - the (possibly irregular) observations are linearly
   interpolated onto a uniform grid of spacing dt.
2. partition_blocks - the grid series is cut into consecutive tau-blocks;
   the last one may be shorter.
3. log_likelihood - the sum over consecutive block pairs of the Euler
   transition log-density. Because the per-step kernels multiply exactly,
   this is the sum of every bridging step after the first block, which
   LikelihoodSurface computes in one vectorised pass.
4. fit_mle - a derivative-free optimiser (scipy Nelder-Mead, coefficients
   1 / 2 / 0.5 / 0.5, bounds enforced by clipping) maximises it, best of a
   few jittered restarts; grid search is available for small lattices.

WHY A SURFACE OBJECT?
---------------------
The optimiser evaluates the likelihood thousands of times on the same data.
LikelihoodSurface interpolates and slices the data once and keeps the window
batch, so parameter-free integrals are computed only on the first call.
"""

import itertools
import logging
import math
from collections.abc import Callable, Mapping
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.optimize import minimize

from src.core.config import get_settings
from src.core.errors import ConfigError, HompError, NumericalError
from src.models.estimation import BlockPartition, Dataset, FitOptions, FitResult, RegularSeries
from src.models.functional import ModelSpec
from src.models.history import HistorySegment, TimeGrid
from src.services.functionals import WindowBatch
from src.services.history import steps_per_window
from src.services.inference import batch_logdensities, sigma2_along

logger = logging.getLogger(__name__)

Bounds = dict[str, tuple[float | None, float | None]]


class EstimationError(ConfigError):
    """Invalid fitting request (bad grid, too little data, start outside bounds)."""

    pass


class NoFiniteLikelihoodError(NumericalError):
    """Every likelihood evaluation was non-finite."""

    pass


# -------------------------------- Data preparation --------------------------------


def interpolate_dataset(data: Dataset, dt: float) -> RegularSeries:
    """
    Linear interpolation onto t0, t0+dt, ... up to the last observation.

    The grid stops at the last node not beyond the final observation time.
    Grid nodes that coincide with observation times reproduce the values.
    """
    if not dt > 0:
        raise EstimationError(f"dt must be positive, got {dt}")
    t0 = float(data.times[0])
    span = float(data.times[-1]) - t0
    n_steps = int(math.floor(span / dt + 1e-9))
    if n_steps < 1:
        raise EstimationError(f"data span {span} is shorter than one grid step dt={dt}")
    grid = TimeGrid(t0=t0, dt=dt, n_steps=n_steps)
    return RegularSeries(grid=grid, values=np.interp(grid.times, data.times, data.values))


def partition_blocks(series: RegularSeries, tau: float) -> BlockPartition:
    """
    Cut a regular series into blocks [0, tau], [tau, 2 tau], ...

    Adjacent blocks share their boundary sample; a shorter final piece becomes
    the remainder.

    Raises:
        EstimationError: dt does not divide tau, or the series is shorter
            than two blocks
    """
    dt = series.grid.dt
    try:
        m = steps_per_window(tau, dt)
    except HompError as e:
        raise EstimationError(str(e)) from e
    n = series.grid.n_steps
    if n < 2 * m:
        raise EstimationError(
            f"series covers {n * dt} but at least two blocks of tau={tau} are needed"
        )

    t0 = series.grid.t0
    values = series.values
    q = n // m
    blocks = [
        HistorySegment(t_end=t0 + (j + 1) * m * dt, tau=tau, samples=values[j * m : (j + 1) * m + 1])
        for j in range(q)
    ]
    remainder = None
    if n > q * m:
        remainder = HistorySegment(
            t_end=t0 + n * dt, tau=(n - q * m) * dt, samples=values[q * m :]
        )
    return BlockPartition(tau=tau, blocks=blocks, remainder=remainder)


# -------------------------------- Likelihood --------------------------------


class LikelihoodSurface:
    """
    The Euler pseudo-likelihood of one dataset, reusable across models.

    All models evaluated on a surface must share its order tau.

    Args:
        data: the observations
        tau: model order
        dt: interpolation grid spacing
        initial_sigma2: constant squared-diffusion history for EWMA-type models
    """

    def __init__(self, data: Dataset, tau: float, dt: float, initial_sigma2: float = 1.0):
        self.series = interpolate_dataset(data, dt)
        self.partition = partition_blocks(self.series, tau)
        self.tau = tau
        self.dt = dt
        self.initial_sigma2 = initial_sigma2
        self.m = self.partition.blocks[0].m

        values = self.series.values
        self._windows = sliding_window_view(values, self.m + 1)[:-1]
        self._y_next = values[self.m + 1 :]
        self._batch = WindowBatch(self._windows, dt, tau)

        # step k (k = 0, 1, ...) bridges block j to block j+1 for j*m <= k < (j+1)*m
        sizes = [segment.m for segment in self.partition.segments[1:]]
        self._pair_edges = np.concatenate(([0], np.cumsum(sizes)))

    @property
    def n_steps(self) -> int:
        return int(self._y_next.size)

    def _check_model(self, model: ModelSpec) -> None:
        if not np.isclose(model.tau, self.tau, rtol=1e-9, atol=0.0):
            raise EstimationError(f"model order {model.tau} differs from the surface's {self.tau}")

    def step_terms(self, model: ModelSpec) -> np.ndarray:
        """Per-step log-densities of every bridging step, in time order."""
        self._check_model(model)
        batch = self._batch
        if model.uses_sigma2:
            aux = sigma2_along(
                model,
                self.series.values,
                np.full(self.m + 1, self.initial_sigma2),
                self.dt,
            )
            batch = WindowBatch(
                self._windows, self.dt, self.tau, sliding_window_view(aux, self.m + 1)[:-1]
            )
        return batch_logdensities(model, batch, self._y_next, self.dt)

    def pair_terms(self, model: ModelSpec) -> np.ndarray:
        """log p(block j+1 | block j) for every consecutive pair of blocks."""
        terms = self.step_terms(model)
        edges = self._pair_edges
        return np.array([np.sum(terms[a:b]) for a, b in zip(edges[:-1], edges[1:])])

    def __call__(self, model: ModelSpec) -> float:
        return float(np.sum(self.pair_terms(model)))


def log_likelihood(model: ModelSpec, data: Dataset, opts: FitOptions) -> float:
    """
    Sum over consecutive block pairs of the transition log-density.

    Raises:
        EstimationError: data too short for two blocks, or dt does not divide tau
        DegenerateDensityError: zero diffusion somewhere along the data
    """
    surface = LikelihoodSurface(data, model.tau, opts.dt, opts.initial_sigma2)
    return surface(model)


# -------------------------------- Optimisation --------------------------------


class _Objective:
    """Negative log-likelihood with evaluation counting and a best-so-far record."""

    def __init__(self, loglik: Callable[[dict[str, float]], float], names: list[str]):
        self.loglik = loglik
        self.names = names
        self.n_evals = 0
        self.best_x: np.ndarray | None = None
        self.best_value = -math.inf
        self.trace: list[float] = []

    def value(self, x: np.ndarray) -> float:
        self.n_evals += 1
        theta = dict(zip(self.names, (float(v) for v in x)))
        try:
            value = float(self.loglik(theta))
        except (HompError, ValueError, FloatingPointError) as e:
            logger.debug(f"evaluation at {theta} failed: {e}")
            value = -math.inf
        if not math.isfinite(value):
            value = -math.inf
        if value > self.best_value:
            self.best_value = value
            self.best_x = np.array(x, dtype=float)
        self.trace.append(self.best_value)
        return value

    def __call__(self, x: np.ndarray) -> float:
        return -self.value(x)


def _restart_points(
    x0: np.ndarray,
    opts: FitOptions,
    lower: np.ndarray,
    upper: np.ndarray,
) -> list[np.ndarray]:
    """Restart 0 is the initial point; the others are jittered copies of it."""
    points = [x0]
    children = np.random.SeedSequence(opts.seed).spawn(opts.n_restarts)
    for child in children[1:]:
        rng = np.random.default_rng(child)
        scale = opts.jitter * np.where(x0 != 0.0, np.abs(x0), 1.0)
        points.append(np.clip(x0 + scale * rng.standard_normal(x0.size), lower, upper))
    return points


def _nelder_mead(
    loglik: Callable[[dict[str, float]], float],
    names: list[str],
    x0: np.ndarray,
    opts: FitOptions,
    scipy_bounds: list[tuple[float | None, float | None]],
) -> tuple[_Objective, bool]:
    objective = _Objective(loglik, names)
    result = minimize(
        objective,
        x0,
        method="Nelder-Mead",
        bounds=scipy_bounds,
        options={
            "maxfev": opts.max_evals,
            "xatol": opts.xatol,
            "fatol": opts.fatol,
            "adaptive": False,
        },
    )
    return objective, bool(result.success) and math.isfinite(objective.best_value)


def maximize(
    loglik: Callable[[dict[str, float]], float],
    opts: FitOptions,
    initial: Mapping[str, float],
    bounds: Bounds | None = None,
) -> FitResult:
    """
    Maximise a named objective with Nelder-Mead restarts or a grid search.

    Args:
        loglik: maps a parameter dict to a log-likelihood; non-finite values
            and toolkit errors count as -inf
        opts: optimiser settings
        initial: starting point (Nelder-Mead) and parameter names
        bounds: per-parameter (lower, upper); None entries are unbounded

    Raises:
        EstimationError: the starting point lies outside the bounds
        NoFiniteLikelihoodError: no evaluation produced a finite value
    """
    names = list(initial)
    bounds = bounds or {}
    lower = np.array([_bound(bounds, n, 0, -math.inf) for n in names])
    upper = np.array([_bound(bounds, n, 1, math.inf) for n in names])
    if opts.optimizer == "grid-search":
        return _grid_search(loglik, opts, names, lower, upper)

    x0 = np.array([float(initial[n]) for n in names])
    if np.any(x0 < lower) or np.any(x0 > upper):
        raise EstimationError(f"initial point {dict(initial)} lies outside the bounds")

    scipy_bounds = [(_finite_or_none(lo), _finite_or_none(hi)) for lo, hi in zip(lower, upper)]
    starts = _restart_points(x0, opts, lower, upper)
    workers = min(len(starts), get_settings().MAX_WORKERS)
    logger.info(f"Nelder-Mead over {names} with {len(starts)} restart(s)")

    def run(x: np.ndarray) -> tuple[_Objective, bool]:
        return _nelder_mead(loglik, names, x, opts, scipy_bounds)

    if workers <= 1:
        outcomes = [run(x) for x in starts]
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            outcomes = list(executor.map(run, starts))

    restart_logliks = [obj.best_value for obj, _ in outcomes]
    best = int(np.argmax(restart_logliks))
    best_obj, converged = outcomes[best]
    if best_obj.best_x is None or not math.isfinite(best_obj.best_value):
        raise NoFiniteLikelihoodError("every likelihood evaluation was non-finite")

    trace = list(itertools.accumulate(
        itertools.chain.from_iterable(obj.trace for obj, _ in outcomes), max
    ))
    result = FitResult(
        theta_hat=dict(zip(names, (float(v) for v in np.clip(best_obj.best_x, lower, upper)))),
        loglik=best_obj.best_value,
        n_evals=sum(obj.n_evals for obj, _ in outcomes),
        converged=converged,
        restart_logliks=restart_logliks,
        trace=trace,
    )
    logger.info(
        f"Best log-likelihood {result.loglik:.6f} at {result.theta_hat} "
        f"({result.n_evals} evaluations, converged={result.converged})"
    )
    return result


def _grid_search(
    loglik: Callable[[dict[str, float]], float],
    opts: FitOptions,
    names: list[str],
    lower: np.ndarray,
    upper: np.ndarray,
) -> FitResult:
    lattice = opts.grid or {}
    missing = set(names) - set(lattice)
    if missing:
        raise EstimationError(f"grid-search lattice has no axis for {sorted(missing)}")
    axes = [
        [v for v in lattice[name] if lo <= v <= hi]
        for name, lo, hi in zip(names, lower, upper)
    ]
    if any(len(axis) == 0 for axis in axes):
        raise EstimationError("a grid axis has no points inside the bounds")

    objective = _Objective(loglik, names)
    for point in itertools.product(*axes):
        objective.value(np.array(point, dtype=float))
    if objective.best_x is None:
        raise NoFiniteLikelihoodError("every grid point gave a non-finite likelihood")
    logger.info(f"Grid search: {objective.n_evals} points, best {objective.best_value:.6f}")
    return FitResult(
        theta_hat=dict(zip(names, (float(v) for v in objective.best_x))),
        loglik=objective.best_value,
        n_evals=objective.n_evals,
        converged=True,
        restart_logliks=[objective.best_value],
        trace=objective.trace,
    )


def _bound(bounds: Bounds, name: str, side: int, default: float) -> float:
    pair = bounds.get(name)
    if pair is None or pair[side] is None:
        return default
    return float(pair[side])


def _finite_or_none(value: float) -> float | None:
    return float(value) if math.isfinite(value) else None


# -------------------------------- Fitting --------------------------------


def fit_mle(
    model_family: ModelSpec | Callable[[dict[str, float]], ModelSpec],
    data: Dataset,
    opts: FitOptions,
    tau: float | None = None,
) -> FitResult:
    """
    Maximum-likelihood estimate of the model parameters.

    Args:
        model_family: a ModelSpec (its parameters are fitted; their values
            are the default start and their bounds the default bounds), or a
            constructor theta -> ModelSpec, in which case opts.initial is
            required
        data: the observations
        opts: interpolation grid and optimiser settings; opts.bounds
            override parameter bounds
        tau: model order, only needed when model_family is a constructor
            (otherwise read from the model built at opts.initial)

    Raises:
        EstimationError: missing start point, unknown parameter names,
            start outside bounds, too little data
        NoFiniteLikelihoodError: no finite likelihood anywhere visited
    """
    if isinstance(model_family, ModelSpec):
        base = model_family
        family: Callable[[dict[str, float]], ModelSpec] = base.with_params
        initial = dict(base.param_values)
        bounds: Bounds = {n: (p.lower, p.upper) for n, p in base.params.items()}
        unknown = set(opts.initial or {}) | set(opts.bounds or {})
        unknown -= set(base.params)
        if unknown:
            raise EstimationError(f"options name unknown parameters: {sorted(unknown)}")
    else:
        if not opts.initial:
            raise EstimationError("a model constructor needs opts.initial")
        family = model_family
        initial = {}
        bounds = {}
    initial.update(opts.initial or {})
    bounds.update(opts.bounds or {})
    if opts.optimizer == "grid-search" and opts.grid:
        initial = {n: initial.get(n, opts.grid[n][0]) for n in opts.grid}

    if tau is None:
        tau = family(initial).tau
    surface = LikelihoodSurface(data, tau, opts.dt, opts.initial_sigma2)
    logger.info(
        f"Fitting {sorted(initial)} on {len(data)} observations "
        f"({surface.n_steps} steps of dt={opts.dt})"
    )
    return maximize(lambda theta: surface(family(theta)), opts, initial, bounds)
