"""
History segments and time grids.

A HistorySegment is the state of a higher-order Markov process: the whole
trajectory over the last `tau` time units, stored as samples on a uniform
grid. The right endpoint holds the current value y(t) = H_t(t).

WHY NUMPY ARRAYS INSIDE PYDANTIC?
---------------------------------
The samples are read by vectorised quadrature and by the simulator, so they
are kept as a read-only float64 array rather than a tuple of floats. The
validators below coerce lists/tuples and enforce the invariants; the
serializer turns the array back into a JSON list.
"""

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator, model_validator


def _readonly_array(value: object, name: str) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


class TimeGrid(BaseModel):
    """Uniform discretisation of continuous time: t0, t0+dt, ..., t0+n_steps*dt."""

    model_config = ConfigDict(frozen=True)

    t0: float = Field(default=0.0, description="First grid time")
    dt: float = Field(..., gt=0, description="Grid spacing")
    n_steps: int = Field(..., ge=1, description="Number of steps (nodes - 1)")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_steps + 1)

    @property
    def t_end(self) -> float:
        return self.t0 + self.dt * self.n_steps


class HistorySegment(BaseModel):
    """
    The state function H_t over the closed window [t_end - tau, t_end].

    Sample i sits at time t_end - tau + i * tau / m where m = len(samples) - 1.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    t_end: float = Field(..., description="Right endpoint t of the window")
    tau: float = Field(..., gt=0, description="Order of the process (window length)")
    samples: np.ndarray = Field(..., description="Grid samples, oldest first")

    @field_validator("samples", mode="before")
    @classmethod
    def _coerce_samples(cls, value: object) -> np.ndarray:
        arr = _readonly_array(value, "samples")
        if arr.size < 2:
            raise ValueError("a history segment needs at least two samples")
        return arr

    @model_validator(mode="after")
    def _check_spacing(self) -> "HistorySegment":
        if not self.tau / (self.samples.size - 1) > 0:
            raise ValueError("grid spacing must be strictly positive")
        return self

    @field_serializer("samples")
    def _serialize_samples(self, samples: np.ndarray) -> list[float]:
        return samples.tolist()

    @property
    def m(self) -> int:
        """Number of grid cells in the window."""
        return self.samples.size - 1

    @property
    def dt(self) -> float:
        return self.tau / self.m

    @property
    def t_start(self) -> float:
        return self.t_end - self.tau

    @property
    def times(self) -> np.ndarray:
        # linspace pins both endpoints exactly, so node lookups at
        # t_start and t_end hit samples[0] and samples[-1] bit-for-bit
        return np.linspace(self.t_start, self.t_end, self.m + 1)

    @property
    def current(self) -> float:
        """The current value y(t) = H_t(t)."""
        return float(self.samples[-1])
