"""Exception types shared across the package.

Argument/precondition violations raise plain ValueError; these classes cover
failures that callers are expected to route differently (CLI exit codes,
skip-with-report handling, abort-epoch logic).
"""


class LeadcastError(Exception):
    """Base class for package-specific errors."""


class ConfigurationError(LeadcastError):
    """Invalid or incomplete experiment configuration (CLI exit code 2)."""


class TsfParseError(LeadcastError):
    """Malformed .tsf content. Carries the 1-based line number when known."""

    def __init__(self, message: str, line_number: int | None = None):
        prefix = f"line {line_number}: " if line_number is not None else ""
        super().__init__(prefix + message)
        self.line_number = line_number


class DataError(LeadcastError):
    """Dataset cannot support the requested operation (no windows, missing values...)."""


class DimensionError(LeadcastError):
    """Tensor shape mismatch; message names both shapes."""


class NumericError(LeadcastError):
    """Non-finite value where a finite one is required."""


class CorrelationUndefinedError(LeadcastError):
    """Pearson correlation requested against a constant sequence."""


class ContractError(LeadcastError):
    """An internal calling contract was violated (e.g. unscaled batch fed to a model)."""
