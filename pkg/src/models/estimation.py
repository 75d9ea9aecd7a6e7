"""
Data, options and results of maximum-likelihood fitting.
"""

from collections.abc import Iterable
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator, model_validator

from src.models.history import HistorySegment, TimeGrid


def _float_array(value: object) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim != 1:
        raise ValueError("expected a one-dimensional array")
    arr.setflags(write=False)
    return arr


class Dataset(BaseModel):
    """Discrete observations (t_i, y_i) with strictly increasing times."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    times: np.ndarray
    values: np.ndarray

    @field_validator("times", "values", mode="before")
    @classmethod
    def _coerce(cls, value: object) -> np.ndarray:
        return _float_array(value)

    @model_validator(mode="after")
    def _check(self) -> "Dataset":
        if self.times.size != self.values.size:
            raise ValueError(
                f"times ({self.times.size}) and values ({self.values.size}) differ in length"
            )
        if self.times.size < 2:
            raise ValueError("a dataset needs at least two observations")
        if not np.all(np.isfinite(self.times)) or not np.all(np.isfinite(self.values)):
            raise ValueError("observations must be finite")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("observation times must be strictly increasing")
        return self

    @field_serializer("times", "values")
    def _serialize(self, arr: np.ndarray) -> list[float]:
        return arr.tolist()

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[float, float]]) -> "Dataset":
        pairs = list(pairs)
        return cls(times=[t for t, _ in pairs], values=[y for _, y in pairs])

    def __len__(self) -> int:
        return int(self.times.size)


class RegularSeries(BaseModel):
    """Values on a uniform grid; values[k] sits at grid.times[k]."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: TimeGrid
    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def _coerce(cls, value: object) -> np.ndarray:
        return _float_array(value)

    @model_validator(mode="after")
    def _check(self) -> "RegularSeries":
        if self.values.size != self.grid.n_steps + 1:
            raise ValueError(f"expected {self.grid.n_steps + 1} values, got {self.values.size}")
        return self

    @field_serializer("values")
    def _serialize(self, arr: np.ndarray) -> list[float]:
        return arr.tolist()

    @property
    def times(self) -> np.ndarray:
        return self.grid.times


class BlockPartition(BaseModel):
    """
    Consecutive tau-blocks of a regular series.

    Adjacent blocks share exactly one boundary sample. A trailing piece
    shorter than tau is kept separately as `remainder`.
    """

    model_config = ConfigDict(frozen=True)

    tau: float = Field(..., gt=0)
    blocks: list[HistorySegment] = Field(..., min_length=2)
    remainder: HistorySegment | None = None

    @property
    def segments(self) -> list[HistorySegment]:
        """Full blocks followed by the remainder, if any."""
        if self.remainder is None:
            return list(self.blocks)
        return [*self.blocks, self.remainder]


class FitOptions(BaseModel):
    """How to discretise the data and drive the optimiser."""

    model_config = ConfigDict(frozen=True)

    dt: float = Field(..., gt=0, description="Interpolation grid spacing (must divide tau)")
    optimizer: Literal["nelder-mead", "grid-search"] = "nelder-mead"
    max_evals: int = Field(default=2000, ge=1, description="Likelihood evaluations per restart")
    n_restarts: int = Field(default=1, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64, description="Seed for restart jitter")
    initial: dict[str, float] | None = Field(
        default=None, description="Starting point; defaults to the model's parameter values"
    )
    bounds: dict[str, tuple[float | None, float | None]] | None = Field(
        default=None, description="Per-parameter (lower, upper); None means unbounded"
    )
    grid: dict[str, list[float]] | None = Field(
        default=None, description="Lattice for grid-search, one axis per parameter"
    )
    xatol: float = Field(default=1e-6, gt=0)
    fatol: float = Field(default=1e-5, gt=0)
    jitter: float = Field(default=0.1, ge=0, description="Relative jitter of restart points")
    initial_sigma2: float = Field(
        default=1.0, gt=0, description="Constant sigma2 history the recursion starts from"
    )

    @model_validator(mode="after")
    def _check(self) -> "FitOptions":
        for name, (lower, upper) in (self.bounds or {}).items():
            if lower is not None and upper is not None and lower > upper:
                raise ValueError(f"bounds for '{name}' are reversed: {lower} > {upper}")
        if self.optimizer == "grid-search":
            if not self.grid:
                raise ValueError("grid-search needs a 'grid' lattice")
            if any(len(axis) == 0 for axis in self.grid.values()):
                raise ValueError("grid axes must not be empty")
        return self


class FitResult(BaseModel):
    """Outcome of a fit. `trace` holds the best-so-far log-likelihood per evaluation."""

    theta_hat: dict[str, float]
    loglik: float
    n_evals: int = Field(..., ge=0)
    converged: bool
    restart_logliks: list[float] = Field(default_factory=list)
    trace: list[float] = Field(default_factory=list, exclude=True)


class LoglikReport(BaseModel):
    """Log-likelihood of a dataset at fixed parameters, with its block-pair terms."""

    loglik: float
    params: dict[str, float]
    n_steps: int = Field(..., ge=1, description="Bridging Euler steps")
    pair_logliks: list[float] = Field(..., description="log p(block j+1 | block j)")
