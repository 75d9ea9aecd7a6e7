"""
Euler-Maruyama simulation of higher-order Markov processes.

    y[k+1] = y[k] + nu(H_k) * dt + varsigma(H_k) * sqrt(dt) * Z[k]
    H_{k+1} = roll(H_k, y[k+1])

HOW THIS WORKS:
---------------
Paths are simulated in chunks. Each chunk keeps one buffer per path holding
the initial history followed by the simulated values, so the window used at
step k is simply the slice buffer[:, k : k+m+1] - no copying, and the window
is by construction the trailing tau of the path. Drift and diffusion are
evaluated for all paths of the chunk at once.

DETERMINISM:
------------
Normals come from a Philox (counter-based) generator keyed by
(seed, stream, path_index). A path's noise therefore never depends on which
chunk or worker thread simulated it, and an ensemble is bitwise identical for
any MAX_WORKERS setting.
"""

import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from src.core.config import get_settings
from src.core.errors import ConfigError, NumericalError
from src.models.functional import ModelSpec
from src.models.history import HistorySegment, TimeGrid
from src.models.simulation import Path, SimConfig
from src.services.functionals import WindowBatch, diffusion_values, drift_values
from src.services.history import steps_per_window

logger = logging.getLogger(__name__)

# Independent noise streams under one seed.
SIM_STREAM = 0
JUMP_STREAM = 1
CK_PREFIX_STREAM = 2
CK_CONTINUATION_STREAM = 3


class SimulationError(ConfigError):
    """Simulation could not be set up (grid mismatch, missing sigma2 history, ...)."""

    pass


class DivergenceError(NumericalError):
    """A simulated path left the finite floats."""

    pass


# -------------------------------- Keyed noise --------------------------------


def path_normals(seed: int, stream: int, path_index: int, n: int, offset: int = 0) -> np.ndarray:
    """
    Standard normals number offset .. offset+n-1 of the stream for one path.

    The generator is Philox keyed through SeedSequence(seed, spawn_key=(stream,
    path_index)), i.e. the same child SeedSequence.spawn would hand out.
    """
    seq = np.random.SeedSequence(seed, spawn_key=(stream, path_index))
    rng = np.random.Generator(np.random.Philox(seq))
    return rng.standard_normal(offset + n)[offset:]


def noise_block(
    seed: int,
    stream: int,
    path_indices: range,
    n: int,
    offset: int = 0,
) -> np.ndarray:
    """Normals for several paths, shape (len(path_indices), n)."""
    block = np.empty((len(path_indices), n))
    for row, index in enumerate(path_indices):
        block[row] = path_normals(seed, stream, index, n, offset)
    return block


# -------------------------------- Core integrator --------------------------------


def _integrate(
    model: ModelSpec,
    windows: np.ndarray,
    sigma2_windows: np.ndarray | None,
    dt: float,
    noise: np.ndarray,
) -> tuple[np.ndarray, np.ndarray | None]:
    """
    Euler-Maruyama for a chunk of paths.

    Args:
        windows: (P, m+1) initial histories
        sigma2_windows: (P, m+1) initial squared-diffusion histories or None
        noise: (P, n) standard normals

    Returns:
        values (P, n+1) starting with the initial right endpoint, and the
        realised squared diffusions (P, n) or None
    """
    n_paths, n_steps = noise.shape
    m = windows.shape[1] - 1
    sqrt_dt = np.sqrt(dt)

    state = np.empty((n_paths, m + 1 + n_steps))
    state[:, : m + 1] = windows
    aux = None
    if sigma2_windows is not None:
        aux = np.empty_like(state)
        aux[:, : m + 1] = sigma2_windows

    for k in range(n_steps):
        batch = WindowBatch(
            state[:, k : k + m + 1],
            dt,
            model.tau,
            None if aux is None else aux[:, k : k + m + 1],
        )
        nu = drift_values(model, batch)
        sigma = diffusion_values(model, batch)
        state[:, m + 1 + k] = state[:, m + k] + nu * dt + sigma * sqrt_dt * noise[:, k]
        if aux is not None:
            aux[:, m + 1 + k] = sigma * sigma

    values = state[:, m:]
    if not np.all(np.isfinite(values)):
        raise DivergenceError(f"model '{model.name}' produced non-finite values")
    return values, None if aux is None else aux[:, m + 1 :]


def check_setup(
    model: ModelSpec,
    init: HistorySegment,
    dt: float,
    sigma2_init: HistorySegment | None,
) -> int:
    """Validate model/history/step compatibility and return m = tau / dt."""
    if not np.isclose(init.tau, model.tau, rtol=1e-9, atol=0.0):
        raise SimulationError(f"initial history covers {init.tau}, model order is {model.tau}")
    m = steps_per_window(model.tau, dt)
    if init.m != m:
        raise SimulationError(
            f"initial history spacing {init.dt} differs from the simulation step {dt}"
        )
    if model.uses_sigma2:
        if sigma2_init is None:
            raise SimulationError(f"model '{model.name}' needs an initial sigma2 history")
        if sigma2_init.m != m or not np.isclose(sigma2_init.tau, model.tau, rtol=1e-9, atol=0.0):
            raise SimulationError("sigma2 history must share the initial history's grid")
    return m


def step_count(horizon: float, dt: float) -> int:
    """Number of Euler steps covering `horizon`; dt must divide it."""
    ratio = horizon / dt
    n = int(round(ratio))
    if n < 1 or abs(ratio - n) > 1e-9 * max(1.0, ratio):
        raise SimulationError(f"horizon {horizon} is not a whole number of steps dt={dt}")
    return n


def simulate_array(
    model: ModelSpec,
    windows: np.ndarray,
    dt: float,
    n_steps: int,
    seed: int,
    stream: int = SIM_STREAM,
    sigma2_windows: np.ndarray | None = None,
    noise_offset: int = 0,
    max_workers: int | None = None,
) -> tuple[np.ndarray, np.ndarray | None]:
    """
    Simulate one path per row of `windows` and return raw arrays.

    Row i uses noise stream (seed, stream, i) starting at draw `noise_offset`.
    Chunks of PATH_CHUNK_SIZE rows run on a thread pool and are merged in row
    order.
    """
    settings = get_settings()
    workers = max_workers or settings.MAX_WORKERS
    chunk = max(1, settings.PATH_CHUNK_SIZE)
    total = windows.shape[0]
    chunks = [range(start, min(start + chunk, total)) for start in range(0, total, chunk)]

    def run(rows: range) -> tuple[np.ndarray, np.ndarray | None]:
        noise = noise_block(seed, stream, rows, n_steps, noise_offset)
        aux = None if sigma2_windows is None else sigma2_windows[rows.start : rows.stop]
        return _integrate(model, windows[rows.start : rows.stop], aux, dt, noise)

    if len(chunks) == 1 or workers <= 1:
        results = [run(rows) for rows in chunks]
    else:
        with ThreadPoolExecutor(max_workers=workers) as executor:
            results = list(executor.map(run, chunks))

    values = np.concatenate([r[0] for r in results])
    aux = None if results[0][1] is None else np.concatenate([r[1] for r in results])
    return values, aux


def _to_path(
    init: HistorySegment,
    dt: float,
    values: np.ndarray,
    sigma2: np.ndarray | None,
) -> Path:
    return Path(
        initial_history=init,
        grid=TimeGrid(t0=init.t_end, dt=dt, n_steps=values.size - 1),
        values=values,
        realized_sigma2=sigma2,
    )


def simulate_path(
    model: ModelSpec,
    init: HistorySegment,
    cfg: SimConfig,
    path_index: int = 0,
    sigma2_init: HistorySegment | None = None,
) -> Path:
    """
    Simulate a single path.

    Args:
        model: the process
        init: initial history F0 on the simulation grid (tau = model.tau)
        cfg: step, horizon and seed (n_paths is ignored)
        path_index: which keyed noise stream to use
        sigma2_init: initial squared-diffusion history for EWMA-type models

    Raises:
        SimulationError: dt does not divide tau/horizon, grid mismatch, or a
            missing sigma2 history
        DiffusionError: the diffusion went negative along the path
    """
    m = check_setup(model, init, cfg.dt, sigma2_init)
    n_steps = step_count(cfg.horizon, cfg.dt)
    windows = init.samples.reshape(1, m + 1)
    aux = None if not model.uses_sigma2 else sigma2_init.samples.reshape(1, m + 1)
    noise = path_normals(cfg.seed, SIM_STREAM, path_index, n_steps).reshape(1, n_steps)
    values, sigma2 = _integrate(model, windows, aux, cfg.dt, noise)
    return _to_path(init, cfg.dt, values[0], None if sigma2 is None else sigma2[0])


def simulate_ensemble(
    model: ModelSpec,
    init: HistorySegment,
    cfg: SimConfig,
    sigma2_init: HistorySegment | None = None,
    max_workers: int | None = None,
) -> list[Path]:
    """
    Simulate cfg.n_paths independent paths from the same initial history.

    Path i is identical to simulate_path(..., path_index=i); the result does
    not depend on the number of workers.
    """
    m = check_setup(model, init, cfg.dt, sigma2_init)
    n_steps = step_count(cfg.horizon, cfg.dt)
    logger.info(
        f"Simulating {cfg.n_paths} paths of '{model.name}' "
        f"({n_steps} steps, dt={cfg.dt}, seed={cfg.seed})"
    )

    windows = np.broadcast_to(init.samples, (cfg.n_paths, m + 1))
    aux = None
    if model.uses_sigma2:
        aux = np.broadcast_to(sigma2_init.samples, (cfg.n_paths, m + 1))
    values, sigma2 = simulate_array(
        model, windows, cfg.dt, n_steps, cfg.seed, SIM_STREAM, aux, max_workers=max_workers
    )

    paths = [
        _to_path(init, cfg.dt, values[i], None if sigma2 is None else sigma2[i])
        for i in range(cfg.n_paths)
    ]
    logger.info(f"Simulated {len(paths)} paths")
    return paths
