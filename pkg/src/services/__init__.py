# Business logic services
from src.services.estimate import EstimationError, fit_mle, log_likelihood
from src.services.functionals import DiffusionError, ModelError, make_ewma_vol, make_ho_gbm, make_ho_ou
from src.services.history import HistoryError
from src.services.inference import InferenceError, ck_consistency_check, estimate_jump_moment
from src.services.simulate import SimulationError, simulate_ensemble, simulate_path
from src.services.storage import StorageError

__all__ = [
    "make_ho_gbm",
    "make_ho_ou",
    "make_ewma_vol",
    "simulate_path",
    "simulate_ensemble",
    "estimate_jump_moment",
    "ck_consistency_check",
    "log_likelihood",
    "fit_mle",
    "HistoryError",
    "ModelError",
    "DiffusionError",
    "SimulationError",
    "InferenceError",
    "EstimationError",
    "StorageError",
]
