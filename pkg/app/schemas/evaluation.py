"""
evaluation.py - Evaluation report schemas
"""

from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, Field


class Ranking(str, Enum):
    """Scores used to rank candidate next items."""

    EXTENSION = "extension"
    MARGINAL = "marginal"


class HeldOutDiagnostic(BaseModel):
    basket: List[int]
    held_out: int
    correct_probability: float = Field(..., ge=0.0, le=1.0)
    symmetric_kl: Optional[float] = Field(None, description="None when supports do not overlap")


class BasketDiagnostic(BaseModel):
    basket: List[int]
    correct_probability: float = Field(..., ge=0.0, le=1.0)
    symmetric_kl: Optional[float] = None


class ToyDiagnostics(BaseModel):
    held_out: List[HeldOutDiagnostic] = Field(default_factory=list)
    baskets: List[BasketDiagnostic] = Field(default_factory=list)
    mean_correct_probability: float = Field(..., ge=0.0, le=1.0)
    net_symmetric_kl: Optional[float] = Field(
        None, description="Sum of per-basket symmetric KL; None if every basket lacks shared support"
    )


class EvalReport(BaseModel):
    mpr: float = Field(..., ge=0.0, le=100.0)
    mpr_std: float = 0.0
    precision_at: Dict[int, float] = Field(default_factory=dict)
    precision_at_std: Dict[int, float] = Field(default_factory=dict)
    auc: float = Field(..., ge=0.0, le=1.0)
    auc_std: float = 0.0
    trials: int = Field(1, ge=1)
    num_test_baskets: int = Field(0, ge=0)
    skipped_cases: int = Field(0, ge=0, description="Leave-one-out cases whose conditioning failed")
    ranking: Ranking = Ranking.EXTENSION
    toy: Optional[ToyDiagnostics] = None
