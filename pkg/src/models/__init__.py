# Pydantic models and schemas
from src.models.diagnostics import CheckReport, CKReport, JumpMomentEstimate
from src.models.estimation import (
    BlockPartition,
    Dataset,
    FitOptions,
    FitResult,
    LoglikReport,
    RegularSeries,
)
from src.models.functional import FunctionalExpr, ModelSpec, Parameter, WeightFunction
from src.models.history import HistorySegment, TimeGrid
from src.models.simulation import Path, SimConfig

__all__ = [
    "TimeGrid",
    "HistorySegment",
    "FunctionalExpr",
    "WeightFunction",
    "Parameter",
    "ModelSpec",
    "SimConfig",
    "Path",
    "JumpMomentEstimate",
    "CKReport",
    "CheckReport",
    "Dataset",
    "RegularSeries",
    "BlockPartition",
    "FitOptions",
    "FitResult",
    "LoglikReport",
]
