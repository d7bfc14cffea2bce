"""Talab exceptions.

Every failure raised by the library derives from ``TalabError``. The CLI is the
only place that turns them into exit codes.
"""

from talab.utils import check_return, type_check


class TalabError(Exception):
    """Base exception for all talab errors."""

    def __init__(self, message: str) -> None:
        """Initialize talab error with message."""
        type_check(message, str, "message")
        super().__init__(message)
        self.message = message
        check_return(None, type(None), "TalabError.__init__")


# fpx
class PrecisionOverflow(TalabError):
    """Magnitude exceeds the largest p-bit float."""


class PrecisionMismatch(TalabError):
    """Operands carry different precisions."""


class DivisionByZero(TalabError):
    """Divisor is zero."""


class RangeError(TalabError):
    """Argument outside a configured domain (exp, attention logits)."""


class DomainError(TalabError):
    """Argument outside the mathematical domain of the function."""


class FloatFormatError(TalabError):
    """A FloatP was constructed with fields violating its invariants."""


# depthlog
class TraceUnavailable(TalabError):
    """Depth requested from values that were not produced under tracing."""


# tensora / attncore
class ShapeMismatch(TalabError):
    """Matrix shapes are incompatible for the operation."""


class CapacityExceeded(TalabError):
    """An n-squared intermediate would exceed the desk-scale cap."""


class BadDimension(TalabError):
    """Embedding dimension unusable for the requested construction."""


class DegenerateRow(TalabError):
    """An attention row sum is zero, so D is not invertible."""


# hardlang
class UnknownSymbol(TalabError):
    """Word contains a letter the morphism does not map."""


class MalformedPairSet(TalabError):
    """Accepted pair whose second component is not idempotent."""


class BalanceUnreachable(TalabError):
    """Rejection sampling could not reach the requested label balance."""


class BadTable(TalabError):
    """Composition table is not a monoid."""


# probe / io
class ConfigError(TalabError):
    """Invalid configuration value."""


class DataFormatError(TalabError):
    """Malformed dataset, model or monoid document."""


class EmptyDataset(TalabError):
    """Evaluation requested on a dataset with no examples."""


class DivergenceError(TalabError):
    """Training produced a non-finite loss."""


# exporters
class ExportError(TalabError):
    """A value could not be written in the requested format."""
