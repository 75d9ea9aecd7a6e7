"""
The JSON run document and the manifest written next to every run's outputs.

A run document names one command and carries everything that command needs:

    {
      "command": "simulate",
      "model": {"family": "ho_ou", "tau": 1.0, "theta": 0.5, "sigma": 0.2},
      "initial_history": {"value": 1.0},
      "simulation": {"dt": 0.01, "horizon": 10.0, "n_paths": 100},
      "seed": 42
    }

Model families: ho_gbm, ho_ou, ewma_vol and custom (an explicit expression
tree with its parameters).
"""

from typing import Annotated, Literal, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.core.errors import ConfigError
from src.models.estimation import FitOptions
from src.models.functional import Const, FunctionalExpr, ModelSpec, Parameter
from src.models.history import HistorySegment
from src.services.functionals import make_ewma_vol, make_ho_gbm, make_ho_ou
from src.services.history import constant_history, steps_per_window

Command = Literal["simulate", "fit", "loglik", "check"]


# -------------------------------- Model documents --------------------------------


class HoGbmDocument(BaseModel):
    """Higher-order GBM: dy = alpha*I dt + beta*I dW."""

    family: Literal["ho_gbm"] = "ho_gbm"
    tau: float = Field(..., gt=0)
    alpha: float
    beta: float = Field(..., ge=0)

    def build(self) -> ModelSpec:
        return make_ho_gbm(self.alpha, self.beta, self.tau)


class HoOuDocument(BaseModel):
    """Higher-order Ornstein-Uhlenbeck: dy = -theta*I dt + sigma dW."""

    family: Literal["ho_ou"] = "ho_ou"
    tau: float = Field(..., gt=0)
    theta: float
    sigma: float = Field(..., ge=0)

    def build(self) -> ModelSpec:
        return make_ho_ou(self.theta, self.sigma, self.tau)


class EwmaVolDocument(BaseModel):
    """EWMA volatility; `drift` may reference names declared in `params`."""

    model_config = ConfigDict(populate_by_name=True)

    family: Literal["ewma_vol"] = "ewma_vol"
    tau: float = Field(..., gt=0)
    lam: float = Field(..., gt=0, alias="lambda", description="Decay of the weights")
    drift: FunctionalExpr = Field(default_factory=lambda: Const(value=0.0))
    params: dict[str, Parameter] = Field(default_factory=dict)
    reverse_weights: bool = False

    def build(self) -> ModelSpec:
        return make_ewma_vol(
            self.lam, self.tau, self.drift, self.params, reverse_weights=self.reverse_weights
        )


class CustomDocument(BaseModel):
    """Any model written as drift/diffusion expression trees."""

    family: Literal["custom"] = "custom"
    name: str = "custom"
    tau: float = Field(..., gt=0)
    drift: FunctionalExpr
    diffusion: FunctionalExpr
    params: dict[str, Parameter] = Field(default_factory=dict)

    def build(self) -> ModelSpec:
        return ModelSpec(
            name=self.name,
            tau=self.tau,
            drift=self.drift,
            diffusion=self.diffusion,
            params=self.params,
        )


ModelDocument = Annotated[
    Union[HoGbmDocument, HoOuDocument, EwmaVolDocument, CustomDocument],
    Field(discriminator="family"),
]


# -------------------------------- Options --------------------------------


class InitialHistory(BaseModel):
    """F0: either a constant level or explicit grid samples (oldest first)."""

    value: float | None = None
    samples: list[float] | None = None

    @model_validator(mode="after")
    def _one_of(self) -> "InitialHistory":
        if (self.value is None) == (self.samples is None):
            raise ValueError("initial_history needs exactly one of 'value' or 'samples'")
        return self

    def build(self, tau: float, dt: float, t_end: float = 0.0) -> HistorySegment:
        if self.value is not None:
            return constant_history(self.value, tau, dt, t_end)
        m = steps_per_window(tau, dt)
        if len(self.samples) != m + 1:
            raise ConfigError(
                f"initial_history has {len(self.samples)} samples, the grid needs {m + 1}"
            )
        return HistorySegment(t_end=t_end, tau=tau, samples=self.samples)


class SimulationOptions(BaseModel):
    dt: float = Field(..., gt=0)
    horizon: float = Field(..., gt=0)
    n_paths: int = Field(default=1, ge=1)


class CheckOptions(BaseModel):
    """Settings of the jump-moment and Chapman-Kolmogorov diagnostics."""

    dt: float = Field(..., gt=0, description="Grid spacing of the reference history")
    delta_t: float | None = Field(
        default=None, gt=0, description="Jump-moment step; defaults to dt"
    )
    n_samples: int = Field(default=100_000, ge=2, description="One-step samples per moment")
    t: float = Field(default=2.0, gt=0)
    T: float = Field(default=4.0, gt=0)
    ck_samples: int = Field(default=10_000, ge=2, description="Samples per CK arm")
    n_se: float = Field(default=3.0, gt=0, description="Allowed standard errors for D1/D2")

    @model_validator(mode="after")
    def _check_times(self) -> "CheckOptions":
        if not self.t < self.T:
            raise ValueError(f"need t < T, got t={self.t}, T={self.T}")
        return self

    @property
    def step(self) -> float:
        return self.dt if self.delta_t is None else self.delta_t


# -------------------------------- Run document --------------------------------


class RunConfig(BaseModel):
    """One run of the toolkit; `seed` and `out_dir` can be overridden on the command line."""

    command: Command
    model: ModelDocument
    initial_history: InitialHistory = Field(default_factory=lambda: InitialHistory(value=0.0))
    initial_sigma2: float = Field(
        default=1.0, gt=0, description="Constant sigma2 history for EWMA-type models"
    )
    simulation: SimulationOptions | None = None
    fit: FitOptions | None = None
    check: CheckOptions | None = None
    data: str | None = Field(default=None, description="CSV with header time,value")
    out_dir: str | None = None
    seed: int = Field(default=0, ge=0, lt=2**64)

    @model_validator(mode="after")
    def _sections_present(self) -> "RunConfig":
        if self.command == "simulate" and self.simulation is None:
            raise ValueError("command 'simulate' needs a 'simulation' section")
        if self.command in ("fit", "loglik"):
            if self.fit is None:
                raise ValueError(f"command '{self.command}' needs a 'fit' section")
            if not self.data:
                raise ValueError(f"command '{self.command}' needs a 'data' file")
        if self.command == "check" and self.check is None:
            raise ValueError("command 'check' needs a 'check' section")
        return self


class RunManifest(BaseModel):
    """Enough to reproduce a run exactly: resolved config, seed and version."""

    command: Command
    version: str
    seed: int
    config: dict
    outputs: list[str]
