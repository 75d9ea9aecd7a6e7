"""
Diagnostic reports for the probabilistic structure of a model.

These are plain values; the CLI serialises them to JSON as-is.
"""

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, model_validator


class JumpMomentEstimate(BaseModel):
    """
    Monte-Carlo estimate of the n-th jump moment

        D(n) = E[(y(t+dt) - y(t))**n] / (n! * dt)

    D(1) identifies the drift, 2 * D(2) the squared diffusion.
    """

    model_config = ConfigDict(frozen=True)

    order: Literal[1, 2] = Field(..., description="Moment order n")
    value: float
    std_error: float = Field(..., ge=0)
    n_samples: int = Field(..., ge=1)
    delta_t: float = Field(..., gt=0)


class CKReport(BaseModel):
    """
    Two-arm Chapman-Kolmogorov check on terminal values y(T).

    Arm A runs straight from F0 to T; arm B stops at t, restarts from the
    history H_t with fresh noise and continues to T.
    """

    model_config = ConfigDict(frozen=True)

    ks_statistic: float = Field(..., ge=0.0, le=1.0)
    p_value: float = Field(..., ge=0.0, le=1.0)
    n_samples: int = Field(..., ge=1, description="Samples per arm")
    t: float = Field(..., gt=0, description="Intermediate time (after F0)")
    T: float = Field(..., gt=0, description="Terminal time (after F0)")
    critical_value: float = Field(..., gt=0, description="1% two-sample KS critical value")

    @model_validator(mode="after")
    def _check_times(self) -> "CKReport":
        if not self.t < self.T:
            raise ValueError("need 0 < t < T")
        return self

    @property
    def passed(self) -> bool:
        return self.ks_statistic < self.critical_value


class CheckReport(BaseModel):
    """
    Everything `check` computes at the reference history, plus the verdicts.

    D1 passes when it lies within `n_se` standard errors of the drift, D2 when
    it lies within `n_se` standard errors of its exact finite-step mean
    varsigma^2 / 2 + nu^2 * delta_t / 2, and the CK check when the KS
    statistic is below its 1% critical value.
    """

    D1: JumpMomentEstimate
    D2: JumpMomentEstimate
    D1_expected: float
    D2_expected: float
    ks_statistic: float
    ck: CKReport
    n_se: float = Field(..., gt=0)
    checks: dict[str, bool]
    passed: bool
