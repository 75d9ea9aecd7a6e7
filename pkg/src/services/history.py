"""
Operations on history segments: sampling, interpolation, quadrature, rolling
updates and the Gateaux derivative of pointwise transformations.

Every function is pure and returns new segments; HistorySegment instances are
immutable so they can be shared between worker threads freely.
"""

from collections.abc import Callable, Sequence

import numpy as np
from scipy.integrate import trapezoid

from src.core.errors import ConfigError
from src.models.functional import WeightFunction
from src.models.history import HistorySegment
from src.services.functionals import weight_values

# Relative slack allowed when comparing times against the window edges.
_TIME_RTOL = 1e-9


class HistoryError(ConfigError):
    """Invalid history segment operation (bad window, grid mismatch, ...)."""

    pass


def _slack(H: HistorySegment) -> float:
    return _TIME_RTOL * max(1.0, abs(H.t_end), H.tau)


def constant_history(value: float, tau: float, dt: float, t_end: float = 0.0) -> HistorySegment:
    """
    A history that has sat at `value` for the whole window.

    `dt` must divide `tau`; the segment gets tau/dt + 1 samples.
    """
    m = steps_per_window(tau, dt)
    return HistorySegment(t_end=t_end, tau=tau, samples=np.full(m + 1, float(value)))


def steps_per_window(tau: float, dt: float) -> int:
    """Number of grid cells m = tau / dt; dt must divide tau."""
    if not tau > 0 or not dt > 0:
        raise HistoryError(f"tau and dt must be positive (tau={tau}, dt={dt})")
    ratio = tau / dt
    m = int(round(ratio))
    if m < 1 or abs(ratio - m) > _TIME_RTOL * max(1.0, ratio):
        raise HistoryError(f"dt={dt} does not divide tau={tau}")
    return m


def from_samples(
    times: Sequence[float],
    values: Sequence[float],
    tau: float,
    m: int,
) -> HistorySegment:
    """
    Build the segment over [t_last - tau, t_last] from discrete observations.

    The m+1 grid samples are linear interpolations of (times, values); grid
    nodes that coincide with an observation time reproduce it exactly.

    Raises:
        HistoryError: length mismatch, non-increasing times, m < 1, or
            observations that do not cover the whole window
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.ndim != 1 or y.ndim != 1 or t.size != y.size:
        raise HistoryError(f"times ({t.size}) and values ({y.size}) must have the same length")
    if m < 1:
        raise HistoryError(f"m must be at least 1, got {m}")
    if not tau > 0:
        raise HistoryError(f"tau must be positive, got {tau}")
    if t.size < 2 or np.any(np.diff(t) <= 0):
        raise HistoryError("times must be strictly increasing (and at least two of them)")

    t_end = float(t[-1])
    t_start = t_end - tau
    if t[0] > t_start + _TIME_RTOL * max(1.0, abs(t_end), tau):
        raise HistoryError(
            f"observations start at {t[0]} but the window needs data from {t_start}"
        )

    grid = np.linspace(t_start, t_end, m + 1)
    return HistorySegment(t_end=t_end, tau=tau, samples=np.interp(grid, t, y))


def evaluate(H: HistorySegment, x: float) -> float:
    """H(x) by linear interpolation between the bracketing grid samples."""
    slack = _slack(H)
    if x < H.t_start - slack or x > H.t_end + slack:
        raise HistoryError(f"x={x} outside window [{H.t_start}, {H.t_end}]")
    return float(np.interp(x, H.times, H.samples))


def _quadrature_nodes(H: HistorySegment, a: float, b: float) -> np.ndarray:
    slack = _slack(H)
    if a > b:
        raise HistoryError(f"integration bounds out of order: a={a} > b={b}")
    if a < H.t_start - slack or b > H.t_end + slack:
        raise HistoryError(f"[{a}, {b}] is not inside window [{H.t_start}, {H.t_end}]")
    a = max(a, H.t_start)
    b = min(b, H.t_end)
    times = H.times
    inner = times[(times > a) & (times < b)]
    return np.concatenate(([a], inner, [b]))


def moving_integral(H: HistorySegment, a: float | None = None, b: float | None = None) -> float:
    """
    Trapezoidal integral of H over [a, b] (defaults: the full window).

    Partial end cells use interpolated endpoint values, so the rule is exact
    for piecewise-linear H on the segment grid.
    """
    a = H.t_start if a is None else a
    b = H.t_end if b is None else b
    xs = _quadrature_nodes(H, a, b)
    return float(trapezoid(np.interp(xs, H.times, H.samples), xs))


def weighted_integral(
    H: HistorySegment,
    w: WeightFunction,
    a: float | None = None,
    b: float | None = None,
    params: dict[str, float] | None = None,
) -> float:
    """Trapezoidal integral of w(x) * H(x) over [a, b] (defaults: the full window)."""
    a = H.t_start if a is None else a
    b = H.t_end if b is None else b
    xs = _quadrature_nodes(H, a, b)
    u = (xs - H.t_start) / H.tau
    integrand = weight_values(w, u, H.tau, params) * np.interp(xs, H.times, H.samples)
    return float(trapezoid(integrand, xs))


def roll(H: HistorySegment, new_value: float) -> HistorySegment:
    """Advance the window by one grid step, appending `new_value` at the new t_end."""
    samples = np.concatenate((H.samples[1:], [float(new_value)]))
    return HistorySegment(t_end=H.t_end + H.dt, tau=H.tau, samples=samples)


def gateaux_derivative(
    V: Callable[[np.ndarray], np.ndarray],
    H: HistorySegment,
    h: HistorySegment,
    eps: float,
) -> HistorySegment:
    """
    Finite-difference Gateaux derivative of a pointwise transformation.

    Returns the segment (V(H + eps*h) - V(H)) / eps, node by node. For
    V(F) = F**a it tends to a * H**(a-1) * h whatever the direction h.

    Raises:
        HistoryError: h is not on H's grid, or eps <= 0
    """
    if not eps > 0:
        raise HistoryError(f"eps must be positive, got {eps}")
    if (
        h.samples.size != H.samples.size
        or not np.isclose(h.tau, H.tau, rtol=_TIME_RTOL, atol=0.0)
        or abs(h.t_end - H.t_end) > _slack(H)
    ):
        raise HistoryError("direction h must be defined on the same grid as H")
    base = np.asarray(V(H.samples), dtype=float)
    bumped = np.asarray(V(H.samples + eps * h.samples), dtype=float)
    return HistorySegment(t_end=H.t_end, tau=H.tau, samples=(bumped - base) / eps)
