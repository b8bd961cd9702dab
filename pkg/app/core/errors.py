"""
errors.py - Exception hierarchy for the DPP learning library

Library code raises these; the CLI maps them onto CLIError subclasses with
user-facing suggestions and exit codes.
"""

from typing import Any, Optional


class DPPError(Exception):
    """Base exception for all library errors."""
    pass


class InvalidInputError(DPPError, ValueError):
    """Malformed factor, basket, or index out of range."""
    pass


class SingularMinorError(DPPError):
    """A restricted kernel L_A is singular where a gradient or solve needs it."""

    def __init__(self, message: str, basket: Optional[Any] = None):
        self.basket = basket
        super().__init__(message)


class ConditioningError(DPPError):
    """The observed set has zero probability under the model."""

    def __init__(self, message: str = "observed set has zero probability", observed: Optional[Any] = None):
        self.observed = observed
        super().__init__(message)


class NegativeGenerationError(DPPError):
    """No valid negative could be produced from a positive basket."""
    pass


class CorpusError(DPPError):
    """Error while reading or validating a transaction corpus."""

    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class DivergenceError(DPPError):
    """Training produced a non-finite objective or factor."""

    def __init__(self, message: str, last_good: Optional[Any] = None, report: Optional[Any] = None):
        self.last_good = last_good
        self.report = report
        super().__init__(message)


class ModelFileError(DPPError):
    """Model file is truncated, has a bad header, or an unsupported version."""
    pass
