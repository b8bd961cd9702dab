"""
Configuration management for the CLI application.

Training settings resolve in three layers: TrainConfig defaults, then an
optional YAML run file (keys are TrainConfig field names), then explicit
command-line flags. No environment variables are read.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from app.schemas.training import TrainConfig
from cli.utils.logging import InputFileError, UsageError


@dataclass
class CLIConfig:
    """Global options shared by every command."""

    verbose: bool = False
    quiet: bool = False
    no_color: bool = False
    log_file: Optional[str] = None


def load_run_file(path: Path) -> Dict[str, Any]:
    """Read a YAML run file into a plain mapping."""
    path = Path(path)
    if not path.exists():
        raise InputFileError(f"Config file not found: {path}", ["Check the --config path"])
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise UsageError(f"Config file {path} is not valid YAML: {exc}")
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise UsageError(f"Config file {path} must contain a mapping of TrainConfig fields")
    return data


def resolve_train_config(config_path: Optional[Path] = None, **flags: Any) -> TrainConfig:
    """
    Merge defaults, the optional run file and explicit flags.

    Args:
        config_path: Optional YAML run file
        **flags: TrainConfig fields given on the command line; None means unset

    Returns:
        Validated TrainConfig (raises pydantic.ValidationError on bad values)
    """
    data: Dict[str, Any] = {}
    if config_path is not None:
        data.update(load_run_file(config_path))
    data.update({key: value for key, value in flags.items() if value is not None})
    return TrainConfig(**data)
