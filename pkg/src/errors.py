"""
Exception hierarchy shared across the package.

Library code raises these; the command-line entry point maps them to a
one-line machine-readable error record using each class's ``code``.
"""

from typing import Optional


class SvcError(Exception):
    """Base class for all package errors."""

    code = "svc_error"


class ShapeError(SvcError, ValueError):
    """Tensor or matrix shapes are incompatible."""

    code = "shape_mismatch"


class NonFiniteError(SvcError, FloatingPointError):
    """A NaN or Inf was produced where finite values are required."""

    code = "non_finite"


class TapeError(SvcError, RuntimeError):
    """Gradient tape misuse (no active tape, consumed tape, ...)."""

    code = "tape_error"


class ScheduleError(SvcError, ValueError):
    """Noise-level schedule preconditions violated."""

    code = "schedule_error"


class FormatError(SvcError, ValueError):
    """Malformed or unsupported file / signal format."""

    code = "format_error"


class ConfigMismatchError(SvcError, ValueError):
    """Checkpoint, network preset or feature dimensions do not match."""

    code = "config_mismatch"


class TrainingDivergedError(SvcError, RuntimeError):
    """Loss or gradients became non-finite during optimization."""

    code = "training_diverged"

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message)
        self.step = step


class NonDeterministicError(SvcError, RuntimeError):
    """A function expected to be deterministic returned different values."""

    code = "non_deterministic"


def error_code(exc: BaseException) -> str:
    """Return the stable error code for an exception."""
    if isinstance(exc, SvcError):
        return exc.code
    if isinstance(exc, FileNotFoundError):
        return "file_not_found"
    if isinstance(exc, PermissionError):
        return "permission_denied"
    if isinstance(exc, ValueError):
        return "invalid_value"
    return "internal_error"
