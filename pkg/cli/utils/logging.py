"""
Logging and error handling utilities for the CLI.
"""

import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError
from rich.console import Console
from rich.logging import RichHandler

from app.core.errors import (
    ConditioningError,
    CorpusError,
    DivergenceError,
    DPPError,
    InvalidInputError,
    ModelFileError,
)


class CLILogger:
    """Centralized logging for the CLI application.

    Console messages go to stderr so JSON and CSV written to stdout stay
    machine readable.
    """

    def __init__(
        self,
        verbose: bool = False,
        quiet: bool = False,
        log_file: Optional[Path] = None,
        no_color: bool = False,
    ):
        self.verbose = verbose
        self.quiet = quiet
        self.log_file = log_file
        self.console = Console(stderr=True, no_color=no_color, highlight=False)

        self._setup_logging()

    def _setup_logging(self) -> None:
        """Route library logging through Rich on stderr, plus an optional file."""
        level = logging.DEBUG if self.verbose else logging.WARNING
        if self.quiet:
            level = logging.ERROR

        handlers: List[logging.Handler] = [
            RichHandler(console=self.console, show_path=False, level=level)
        ]
        if self.log_file is not None:
            file_handler = logging.FileHandler(self.log_file, mode="a", encoding="utf-8")
            file_handler.setLevel(logging.DEBUG)
            file_handler.setFormatter(
                logging.Formatter("%(asctime)s - %(name)s - %(levelname)s - %(message)s")
            )
            handlers.append(file_handler)

        root = logging.getLogger()
        for handler in list(root.handlers):
            root.removeHandler(handler)
        for handler in handlers:
            root.addHandler(handler)
        root.setLevel(logging.DEBUG if (self.verbose or self.log_file) else level)

    def info(self, message: str, **kwargs) -> None:
        """Log info message."""
        if not self.quiet:
            self.console.print(message, **kwargs)
        logging.getLogger("cli").debug(message)

    def success(self, message: str, **kwargs) -> None:
        """Log success message."""
        if not self.quiet:
            self.console.print(f"[green]✓[/green] {message}", **kwargs)
        logging.getLogger("cli").debug(f"SUCCESS: {message}")

    def warning(self, message: str, **kwargs) -> None:
        """Log warning message."""
        if not self.quiet:
            self.console.print(f"[yellow]⚠️[/yellow] {message}", **kwargs)

    def error(self, message: str, **kwargs) -> None:
        """Log error message."""
        self.console.print(f"[red]❌[/red] {message}", **kwargs)

    def debug(self, message: str, **kwargs) -> None:
        """Log debug message."""
        if self.verbose:
            self.console.print(f"[dim]DEBUG: {message}[/dim]", **kwargs)


class CLIError(Exception):
    """Base exception for CLI errors."""

    def __init__(self, message: str, suggestions: Optional[list] = None, exit_code: int = 1):
        self.message = message
        self.suggestions = suggestions or []
        self.exit_code = exit_code
        super().__init__(message)


class UsageError(CLIError):
    """Bad flags or configuration values."""

    def __init__(self, message: str, suggestions: Optional[list] = None):
        super().__init__(message, suggestions=suggestions, exit_code=2)


class InputFileError(CLIError):
    """Missing or malformed corpus or model file."""

    def __init__(self, message: str, suggestions: Optional[list] = None):
        super().__init__(message, suggestions=suggestions, exit_code=2)


class TrainingError(CLIError):
    """Training aborted."""
    pass


def to_cli_error(error: Exception) -> Optional[CLIError]:
    """Translate library exceptions into CLI errors with suggestions."""
    if isinstance(error, CLIError):
        return error
    if isinstance(error, ValidationError):
        problems = "; ".join(
            f"{'.'.join(str(p) for p in e['loc']) or 'config'}: {e['msg']}" for e in error.errors()
        )
        return UsageError(f"Invalid configuration: {problems}", ["Run with --help to see accepted values"])
    if isinstance(error, CorpusError):
        return InputFileError(f"Could not read corpus: {error}", ["Expect one basket per line of integer item ids"])
    if isinstance(error, ModelFileError):
        return InputFileError(f"Could not read model: {error}", ["Re-create the model with the train command"])
    if isinstance(error, DivergenceError):
        return TrainingError(
            f"Training diverged: {error}",
            ["Lower --step-size or set max_row_norm in a --config file"],
        )
    if isinstance(error, ConditioningError):
        return UsageError(f"Cannot condition on {error.observed}: {error}")
    if isinstance(error, InvalidInputError):
        return UsageError(str(error))
    if isinstance(error, DPPError):
        return CLIError(str(error))
    return None


def handle_cli_error(error: Exception, logger: CLILogger) -> int:
    """
    Handle CLI errors with user-friendly messages and suggestions.

    Args:
        error: The exception that occurred
        logger: Logger instance for output

    Returns:
        Exit code for the application
    """
    cli_error = to_cli_error(error)
    if cli_error is not None:
        logger.error(cli_error.message)
        if cli_error.suggestions:
            logger.console.print()
            for suggestion in cli_error.suggestions:
                logger.console.print(f"   → {suggestion}")
        return cli_error.exit_code

    if isinstance(error, KeyboardInterrupt):
        logger.console.print("\n[yellow]Operation cancelled by user[/yellow]")
        return 130

    if isinstance(error, FileNotFoundError):
        logger.error(f"File not found: {error.filename}")
        logger.console.print("   → Check the file path and try again")
        return 2

    if isinstance(error, PermissionError):
        logger.error(f"Permission denied: {error.filename}")
        logger.console.print("   → Check file permissions")
        return 2

    logger.error(f"Unexpected error: {error}")
    if logger.verbose:
        import traceback
        logger.console.print(traceback.format_exc())
    else:
        logger.console.print("   → Run with --verbose for more details")
    return 1
