"""
training.py - Training configuration and report schemas
"""

import hashlib
import json
from enum import Enum
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class Method(str, Enum):
    MLE = "mle"
    CE_DYNAMIC = "ce_dynamic"
    CE_EXPLICIT = "ce_explicit"
    CE_PRODUCT = "ce_product"
    NCE = "nce"

    @property
    def uses_negatives(self) -> bool:
        return self is not Method.MLE

    @property
    def regime(self) -> Optional[str]:
        """Negative regime backing the method, None for MLE."""
        return {
            Method.MLE: None,
            Method.CE_DYNAMIC: "dynamic",
            Method.CE_EXPLICIT: "explicit",
            Method.CE_PRODUCT: "product",
            Method.NCE: "product",
        }[self]


class StepSchedule(str, Enum):
    CONSTANT = "constant"
    INVERSE_T = "inverse_t"


class StopReason(str, Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    DIVERGED = "diverged"


class TrainConfig(BaseModel):
    """Every hyperparameter of a training run. Field names double as YAML keys."""

    model_config = ConfigDict(extra="forbid")

    method: Method = Field(Method.MLE, description="Learning objective")
    rank: Optional[int] = Field(
        None, ge=1, description="Kernel rank K; defaults to the largest basket size"
    )
    alpha: float = Field(1.0, ge=0.0, description="Regularization weight")
    negative_ratio: float = Field(
        0.5, ge=0.0, description="Negatives generated per positive in each step"
    )
    step_size_initial: float = Field(0.05, gt=0.0, description="Initial step size eta_0")
    step_schedule: StepSchedule = Field(StepSchedule.INVERSE_T, description="Step size decay")
    schedule_horizon: float = Field(
        1000.0, gt=0.0, description="T0 in eta_t = eta_0 / (1 + t / T0)"
    )
    epsilon: float = Field(
        1e-4, gt=0.0, description="Relative change in validation log-likelihood that stops training"
    )
    max_iters: int = Field(100, ge=1, description="Maximum number of epochs")
    batch_size: int = Field(32, ge=1, description="Positive baskets per gradient step")
    refresh_every: int = Field(
        1, ge=1, description="Gradient steps between negative regenerations"
    )
    max_row_norm: Optional[float] = Field(
        None, gt=0.0, description="Clip every row of V to this norm after each step"
    )
    seed: int = Field(0, ge=0, description="Master seed for every random stream")
    validation_fraction: float = Field(
        0.1, gt=0.0, lt=1.0, description="Share of the training split held out for convergence"
    )
    negative_log_prob_floor: float = Field(
        -700.0, description="Negatives scoring below this are treated as pathological"
    )

    @model_validator(mode="after")
    def _check_method_ratio(self) -> "TrainConfig":
        if self.method is Method.NCE and self.negative_ratio <= 0.0:
            raise ValueError("nce needs a positive negative_ratio")
        return self

    def digest(self) -> str:
        """SHA-256 of the canonical JSON dump."""
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class EpochRecord(BaseModel):
    epoch: int = Field(..., ge=1)
    objective: float = Field(..., description="Mean training objective over the epoch's steps")
    validation_log_likelihood: float = Field(..., description="Mean log P(A) on validation baskets")
    negative_regime: Optional[str] = Field(None, description="dynamic, explicit, product or none")
    num_negatives: int = Field(0, ge=0)
    skipped_samples: int = Field(0, ge=0, description="Singular samples left out of gradients")
    pathological_negatives: int = Field(0, ge=0)
    step_size: float = Field(..., description="Step size in effect at the end of the epoch")
    wall_time: float = Field(..., ge=0.0, description="Seconds spent in the epoch")


class TrainReport(BaseModel):
    method: Method
    num_items: int
    rank: int
    seed: int
    config_digest: str
    initial_validation_log_likelihood: float
    epochs: List[EpochRecord] = Field(default_factory=list)
    iterations: int = 0
    stop_reason: Optional[StopReason] = None
    model_path: Optional[str] = Field(None, description="Where the final factor was written")

    @property
    def validation_history(self) -> List[float]:
        return [self.initial_validation_log_likelihood] + [
            e.validation_log_likelihood for e in self.epochs
        ]
