"""
Configuration management for experiments.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import yaml
from pydantic import ValidationError

from app.schemas.training import Method, TrainConfig

EXPERIMENTS_DIR = Path(__file__).parent.parent / "experiments"


@dataclass
class ExperimentConfig:
    """Configuration for a multi-trial toy experiment."""

    name: str
    experiment_name: str
    corpus: str = "toy"
    copies: int = 1000
    trials: int = 10
    seed: int = 0
    methods: List[str] = field(default_factory=lambda: ["mle", "ce_explicit", "ce_dynamic"])
    training: Dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_file(cls, config_path: Path, experiment_name: Optional[str] = None) -> "ExperimentConfig":
        """Load a config.yaml; raises ValueError on malformed content."""
        config_path = Path(config_path)
        with open(config_path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f) or {}
        if not isinstance(data, dict):
            raise ValueError(f"{config_path} must contain a mapping")
        experiment_name = experiment_name or config_path.parent.name
        return cls(
            name=data.get("name", f"{experiment_name} experiment"),
            experiment_name=experiment_name,
            corpus=data.get("corpus", "toy"),
            copies=int(data.get("copies", 1000)),
            trials=int(data.get("trials", 10)),
            seed=int(data.get("seed", 0)),
            methods=list(data.get("methods", ["mle", "ce_explicit", "ce_dynamic"])),
            training=dict(data.get("training") or {}),
        )

    @classmethod
    def load_experiment_config(cls, experiment_name: str) -> Optional["ExperimentConfig"]:
        """Load configuration for a named experiment under evals/experiments."""
        config_path = EXPERIMENTS_DIR / experiment_name / "config.yaml"
        if not config_path.exists():
            return None
        return cls.from_file(config_path, experiment_name)

    @classmethod
    def list_available_experiments(cls) -> List[str]:
        """List all available experiment configurations."""
        if not EXPERIMENTS_DIR.exists():
            return []
        return sorted(
            d.name for d in EXPERIMENTS_DIR.iterdir() if d.is_dir() and (d / "config.yaml").exists()
        )

    def train_config(self, method: str, seed: int) -> TrainConfig:
        """TrainConfig for one run of this experiment."""
        return TrainConfig(**{**self.training, "method": method, "seed": seed})

    def validate(self) -> List[str]:
        """Validate configuration and return any errors."""
        errors = []

        if self.corpus != "toy":
            errors.append(f"Unsupported corpus: {self.corpus}")

        if self.copies < 1:
            errors.append("copies must be at least 1")

        if self.trials < 1:
            errors.append("trials must be at least 1")

        known = {m.value for m in Method}
        for method in self.methods:
            if method not in known:
                errors.append(f"Unknown method: {method}")

        if not errors:
            try:
                self.train_config(self.methods[0] if self.methods else "mle", self.seed)
            except ValidationError as exc:
                errors.extend(f"training.{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in exc.errors())

        return errors
