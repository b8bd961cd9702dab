"""
schemas - Pydantic models for training configuration and reports

Training hyperparameters and per-epoch records live in training.py, evaluation
reports and toy diagnostics in evaluation.py.
"""

from app.schemas.evaluation import BasketDiagnostic, EvalReport, HeldOutDiagnostic, Ranking, ToyDiagnostics
from app.schemas.training import EpochRecord, Method, StepSchedule, StopReason, TrainConfig, TrainReport

__all__ = [
    "BasketDiagnostic",
    "EpochRecord",
    "EvalReport",
    "HeldOutDiagnostic",
    "Method",
    "Ranking",
    "StepSchedule",
    "StopReason",
    "ToyDiagnostics",
    "TrainConfig",
    "TrainReport",
]
