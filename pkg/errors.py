"""
Error types shared by every module.

All of them derive from ValueError so callers that already guard numeric
input with ``except ValueError`` keep working.
"""
from typing import Any, Dict


class QngError(ValueError):
    """Base class; ``module`` names where the error originated."""

    module = "qng"

    def __init__(self, message: str, module: str = None):
        super().__init__(message)
        if module:
            self.module = module

    def to_dict(self) -> Dict[str, Any]:
        return {"error": type(self).__name__, "module": self.module, "message": str(self)}


class DomainError(QngError):
    """Argument outside its mathematical domain (T > 1, negative mean, g >= 1, ...)."""


class DistributionError(QngError):
    """Probabilities that are negative or not normalized within tolerance."""


class UsageError(QngError):
    """A config of the wrong kind was passed to an operation."""


class InversionError(QngError):
    """Click-statistics inversion produced a negative probability."""


class TimeTagFormatError(QngError):
    """Time-tag file with bad magic, unsupported version or malformed records."""

    module = "timetag_io"


class StreamOrderError(QngError):
    """Time-tag stream not sorted by (timestamp, channel)."""

    module = "estimation"
