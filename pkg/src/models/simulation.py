"""
Simulation configuration and simulated paths.
"""

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator, model_validator

from src.models.history import HistorySegment, TimeGrid


class SimConfig(BaseModel):
    """
    How to discretise and how many paths to draw.

    `dt` must divide the model order tau; that is checked against the model
    and initial history when a simulation starts.
    """

    model_config = ConfigDict(frozen=True)

    dt: float = Field(..., gt=0, description="Euler step = history grid spacing")
    horizon: float = Field(..., gt=0, description="Simulated time after the initial history")
    n_paths: int = Field(default=1, ge=1, description="Number of independent paths")
    seed: int = Field(default=0, ge=0, lt=2**64, description="64-bit seed for the keyed generator")

    @model_validator(mode="after")
    def _check_horizon(self) -> "SimConfig":
        if self.horizon < self.dt:
            raise ValueError(f"horizon {self.horizon} is shorter than one step {self.dt}")
        return self

    @property
    def n_steps(self) -> int:
        return int(round(self.horizon / self.dt))


class Path(BaseModel):
    """
    One trajectory: the initial history plus the values on the simulation grid.

    values[0] is the right endpoint of the initial history. For models that
    read the squared-diffusion history, realized_sigma2[k] is the sample
    appended at grid time k+1.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    initial_history: HistorySegment
    grid: TimeGrid
    values: np.ndarray
    realized_sigma2: np.ndarray | None = None

    @field_validator("values", "realized_sigma2", mode="before")
    @classmethod
    def _coerce(cls, value: object) -> np.ndarray | None:
        if value is None:
            return None
        arr = np.array(value, dtype=float)
        if arr.ndim != 1:
            raise ValueError("path arrays must be one-dimensional")
        arr.setflags(write=False)
        return arr

    @model_validator(mode="after")
    def _check_shape(self) -> "Path":
        if self.values.size != self.grid.n_steps + 1:
            raise ValueError(
                f"expected {self.grid.n_steps + 1} values, got {self.values.size}"
            )
        ratio = self.initial_history.tau / self.grid.dt
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
            raise ValueError("grid dt must divide the history window tau")
        if self.realized_sigma2 is not None and self.realized_sigma2.size != self.grid.n_steps:
            raise ValueError("realized_sigma2 must hold one value per step")
        return self

    @field_serializer("values", "realized_sigma2")
    def _serialize(self, arr: np.ndarray | None) -> list[float] | None:
        return None if arr is None else arr.tolist()

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    @property
    def terminal(self) -> float:
        return float(self.values[-1])
