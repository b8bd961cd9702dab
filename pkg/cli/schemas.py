"""
CLI-specific schemas for files the command line reads and writes.
"""

from typing import List, Optional

from pydantic import BaseModel, Field, model_validator


class ModelHeader(BaseModel):
    """JSON header stored in front of the factor payload of a model file."""

    format_version: int = Field(..., ge=1, description="Model file layout version")
    num_items: int = Field(..., ge=1, description="Catalog size M")
    rank: int = Field(..., ge=1, description="Kernel rank K")
    catalog: List[int] = Field(..., description="Original item id of each dense index")
    config_digest: str = Field(..., description="SHA-256 of the training configuration")
    seed: int = Field(0, description="Master seed of the training run")
    method: Optional[str] = Field(None, description="Training method")
    max_size: Optional[int] = Field(None, ge=1, description="Basket clip size used when loading the corpus")
    validation_fraction: float = Field(
        0.1, ge=0.0, lt=1.0, description="Share of non-test baskets held out for validation"
    )

    @model_validator(mode="after")
    def _check_catalog(self) -> "ModelHeader":
        if len(self.catalog) != self.num_items:
            raise ValueError(f"catalog has {len(self.catalog)} ids for {self.num_items} items")
        if self.rank > self.num_items:
            raise ValueError(f"rank {self.rank} exceeds catalog size {self.num_items}")
        return self
