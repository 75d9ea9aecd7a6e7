"""
Diagnostics of the probabilistic structure of a higher-order Markov model.

1. Jump moments - Monte-Carlo estimates of D(1) (the drift) and D(2) (half the
   squared diffusion) from one-step simulations out of a fixed history.
2. Transition densities - the Euler pseudo-likelihood: a product of Gaussian
   small-step kernels N(y[k+1]; y[k] + nu(H_k) dt, varsigma(H_k)^2 dt). This
   is the small-step solution of the truncated Fokker-Planck equation and
   matches the simulator's scheme exactly.
3. Chapman-Kolmogorov - simulate to T directly, or stop at t, restart from
   H_t with independent noise and continue to T. Both arms must give the
   same distribution of y(T); a two-sample KS test compares them.

All checks work on finite-dimensional functionals (increments, terminal
values), which is where the statements are well defined.
"""

import logging
import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import stats

from src.core.errors import ConfigError, NumericalError
from src.models.diagnostics import CKReport, JumpMomentEstimate
from src.models.functional import ModelSpec
from src.models.history import HistorySegment
from src.services.functionals import WindowBatch, diffusion, diffusion_values, drift, drift_values
from src.services.history import steps_per_window
from src.services.simulate import (
    CK_CONTINUATION_STREAM,
    CK_PREFIX_STREAM,
    JUMP_STREAM,
    SIM_STREAM,
    check_setup,
    path_normals,
    simulate_array,
    step_count,
)

logger = logging.getLogger(__name__)

# Two-sample KS critical value coefficient at the 1% level.
KS_C_ALPHA_1PCT = 1.63


class InferenceError(ConfigError):
    """Invalid diagnostic request (bad order, incompatible step, non-adjacent blocks)."""

    pass


class DegenerateDensityError(NumericalError):
    """Zero diffusion along the data: the Gaussian kernel has no density."""

    pass


# -------------------------------- Jump moments --------------------------------


def estimate_jump_moment(
    model: ModelSpec,
    H: HistorySegment,
    n: int,
    delta_t: float,
    n_samples: int,
    seed: int,
    sigma2: HistorySegment | None = None,
) -> JumpMomentEstimate:
    """
    Estimate D(n)(H) = E[(y(t+delta_t) - y(t))**n] / (n! * delta_t).

    Args:
        model: the process
        H: the history the one-step simulations start from
        n: 1 or 2
        delta_t: step length, 0 < delta_t <= H.dt
        n_samples: number of one-step simulations (>= 2)
        seed: seed of the keyed generator
        sigma2: squared-diffusion history for EWMA-type models

    Raises:
        InferenceError: invalid n, delta_t or sample count
    """
    if n not in (1, 2):
        raise InferenceError(f"jump moment order must be 1 or 2, got {n}")
    if not delta_t > 0 or delta_t > H.dt * (1 + 1e-9):
        raise InferenceError(f"delta_t={delta_t} must lie in (0, grid dt={H.dt}]")
    if n_samples < 2:
        raise InferenceError("need at least two samples for a standard error")

    nu = drift(model, H, sigma2)
    sigma = diffusion(model, H, sigma2)
    z = path_normals(seed, JUMP_STREAM, 0, n_samples)
    increments = nu * delta_t + sigma * math.sqrt(delta_t) * z
    samples = increments**n / (math.factorial(n) * delta_t)

    estimate = JumpMomentEstimate(
        order=n,
        value=float(np.mean(samples)),
        std_error=float(stats.sem(samples)),
        n_samples=n_samples,
        delta_t=delta_t,
    )
    logger.debug(f"D({n}) = {estimate.value:.6g} +/- {estimate.std_error:.2g}")
    return estimate


# -------------------------------- Transition densities --------------------------------


def _gaussian_logpdf(y_next: np.ndarray, mean: np.ndarray, scale: np.ndarray) -> np.ndarray:
    if np.any(scale <= 0):
        raise DegenerateDensityError("zero diffusion encountered; transition density is degenerate")
    return stats.norm.logpdf(y_next, loc=mean, scale=scale)


def batch_logdensities(
    model: ModelSpec,
    batch: WindowBatch,
    y_next: np.ndarray,
    dt: float,
) -> np.ndarray:
    """Per-window Euler log-densities of the successor values `y_next`."""
    nu = drift_values(model, batch)
    sigma = diffusion_values(model, batch)
    return _gaussian_logpdf(y_next, batch.current() + nu * dt, sigma * math.sqrt(dt))


def sigma2_along(
    model: ModelSpec,
    series: np.ndarray,
    sigma2_window: np.ndarray,
    dt: float,
) -> np.ndarray:
    """
    Run the squared-diffusion recursion along an observed series.

    sigma2_window holds the m+1 values aligned with series[:m+1]; each step
    appends diffusion(H_k)**2, exactly as the simulator does.
    """
    m = sigma2_window.size - 1
    aux = np.empty(series.size)
    aux[: m + 1] = sigma2_window
    for k in range(series.size - m - 1):
        batch = WindowBatch(series[k : k + m + 1], dt, model.tau, aux[k : k + m + 1])
        sigma = float(diffusion_values(model, batch))
        aux[m + 1 + k] = sigma * sigma
    return aux


def series_logdensities(
    model: ModelSpec,
    series: np.ndarray,
    dt: float,
    sigma2_series: np.ndarray | None = None,
) -> np.ndarray:
    """
    Euler log-densities of every step of a regular series whose window fits.

    Step k moves from series[m+k] to series[m+k+1] with window
    series[k : k+m+1]; there are len(series) - m - 1 of them.
    """
    m = steps_per_window(model.tau, dt)
    windows = sliding_window_view(series, m + 1)[:-1]
    aux = None
    if sigma2_series is not None:
        aux = sliding_window_view(sigma2_series, m + 1)[:-1]
    batch = WindowBatch(windows, dt, model.tau, aux)
    return batch_logdensities(model, batch, series[m + 1 :], dt)


def step_logdensity(
    model: ModelSpec,
    H: HistorySegment,
    y_next: float,
    dt: float | None = None,
    sigma2: HistorySegment | None = None,
) -> float:
    """log N(y_next; H(t) + nu(H) dt, varsigma(H)^2 dt) - one Euler kernel."""
    dt = H.dt if dt is None else dt
    nu = drift(model, H, sigma2)
    sigma = diffusion(model, H, sigma2)
    return float(
        _gaussian_logpdf(
            np.asarray(y_next), np.asarray(H.current + nu * dt), np.asarray(sigma * math.sqrt(dt))
        )
    )


def _check_adjacent(block_from: HistorySegment, block_to: HistorySegment) -> None:
    scale = max(1.0, abs(block_from.t_end), block_from.tau)
    if not np.isclose(block_from.dt, block_to.dt, rtol=1e-9, atol=0.0):
        raise InferenceError(
            f"blocks have different grid spacing ({block_from.dt} vs {block_to.dt})"
        )
    if block_to.tau > block_from.tau * (1 + 1e-9):
        raise InferenceError("the later block cannot be longer than the order")
    if abs(block_to.t_start - block_from.t_end) > 1e-9 * scale:
        raise InferenceError(
            f"blocks are not adjacent: {block_from.t_end} vs start {block_to.t_start}"
        )
    if not np.isclose(block_to.samples[0], block_from.samples[-1], rtol=1e-12, atol=1e-12):
        raise InferenceError("adjacent blocks disagree on their shared boundary sample")


def transition_logdensity(
    model: ModelSpec,
    block_from: HistorySegment,
    block_to: HistorySegment,
    sigma2: HistorySegment | None = None,
) -> float:
    """
    log p(block_to | block_from) under the Euler pseudo-likelihood.

    Sums the per-step Gaussian log-kernels over the grid steps bridging the
    two blocks, with the rolling window running through their concatenation.
    `block_to` may be a shorter trailing block.

    Args:
        sigma2: squared-diffusion history on block_from's grid (EWMA-type
            models only)

    Raises:
        InferenceError: grid mismatch or non-adjacent blocks
        DegenerateDensityError: zero diffusion along the data
    """
    if not np.isclose(block_from.tau, model.tau, rtol=1e-9, atol=0.0):
        raise InferenceError(f"block covers {block_from.tau}, model order is {model.tau}")
    _check_adjacent(block_from, block_to)

    dt = block_from.dt
    series = np.concatenate((block_from.samples, block_to.samples[1:]))
    aux = None
    if model.uses_sigma2:
        if sigma2 is None or sigma2.m != block_from.m:
            raise InferenceError(f"model '{model.name}' needs a sigma2 history on the first block")
        aux = sigma2_along(model, series, sigma2.samples, dt)
    return float(np.sum(series_logdensities(model, series, dt, aux)))


# -------------------------------- Chapman-Kolmogorov --------------------------------


def ck_consistency_check(
    model: ModelSpec,
    F0: HistorySegment,
    t: float,
    T: float,
    n_samples: int,
    seed: int,
    sigma2_init: HistorySegment | None = None,
    share_noise: bool = False,
    max_workers: int | None = None,
) -> CKReport:
    """
    Compare y(T) simulated directly from F0 with y(T) simulated via H_t.

    Times are measured from the right endpoint of F0 and must be whole
    multiples of F0's grid spacing. With `share_noise=True` arm B re-uses arm
    A's noise, so the two arms coincide and the statistic is 0.

    Raises:
        InferenceError: t, T not in 0 < t < T
    """
    if not 0 < t < T:
        raise InferenceError(f"need 0 < t < T, got t={t}, T={T}")
    dt = F0.dt
    m = check_setup(model, F0, dt, sigma2_init)
    k_t = step_count(t, dt)
    k_T = step_count(T, dt)
    logger.info(f"Chapman-Kolmogorov check: {n_samples} samples per arm, t={t}, T={T}")

    windows = np.broadcast_to(F0.samples, (n_samples, m + 1))
    aux0 = None
    if model.uses_sigma2:
        aux0 = np.broadcast_to(sigma2_init.samples, (n_samples, m + 1))

    direct, _ = simulate_array(
        model, windows, dt, k_T, seed, SIM_STREAM, aux0, max_workers=max_workers
    )

    prefix_stream = SIM_STREAM if share_noise else CK_PREFIX_STREAM
    prefix, prefix_aux = simulate_array(
        model, windows, dt, k_t, seed, prefix_stream, aux0, max_workers=max_workers
    )
    # H_t is the trailing m+1 samples of F0 followed by the prefix path
    state = np.concatenate((windows[:, :-1], prefix), axis=1)
    restart = np.ascontiguousarray(state[:, -(m + 1) :])
    restart_aux = None
    if aux0 is not None:
        aux_state = np.concatenate((aux0, prefix_aux), axis=1)
        restart_aux = np.ascontiguousarray(aux_state[:, -(m + 1) :])

    continuation, _ = simulate_array(
        model,
        restart,
        dt,
        k_T - k_t,
        seed,
        SIM_STREAM if share_noise else CK_CONTINUATION_STREAM,
        restart_aux,
        noise_offset=k_t if share_noise else 0,
        max_workers=max_workers,
    )

    result = stats.ks_2samp(direct[:, -1], continuation[:, -1])
    report = CKReport(
        ks_statistic=float(result.statistic),
        p_value=float(result.pvalue),
        n_samples=n_samples,
        t=t,
        T=T,
        critical_value=KS_C_ALPHA_1PCT * math.sqrt(2.0 / n_samples),
    )
    logger.info(f"KS statistic {report.ks_statistic:.4f} (1% critical {report.critical_value:.4f})")
    return report
