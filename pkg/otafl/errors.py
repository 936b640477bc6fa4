"""
Exception hierarchy for the otafl package.

Every error raised on purpose by otafl derives from OtaflError so the CLI can
report it as a diagnostic instead of a traceback.
"""

from typing import Any, Optional


class OtaflError(Exception):
    """Base class for all otafl errors."""


class ParameterError(OtaflError, ValueError):
    """An argument is out of range or has inconsistent dimensions."""


class DomainError(OtaflError, ValueError):
    """The request is mathematically undefined (empty selection, zero gain...)."""


class DataError(OtaflError, ValueError):
    """A dataset cannot satisfy the requested partition."""


class SolverError(OtaflError, RuntimeError):
    """A numerical solver failed to converge.

    Args:
        message: Human readable description.
        best_iterate: Best feasible point reached before the failure, if any.
    """

    def __init__(self, message: str, best_iterate: Optional[Any] = None):
        super().__init__(message)
        self.best_iterate = best_iterate


class FormatError(OtaflError, ValueError):
    """A binary file does not follow the IDX layout."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class ConfigError(OtaflError, ValueError):
    """An experiment config document is invalid."""

    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(f"{prefix}{message}")
        self.key = key
        self.line = line


class ExperimentError(OtaflError, RuntimeError):
    """A replica of an experiment failed."""

    def __init__(
        self,
        message: str,
        seed: Optional[int] = None,
        method: Optional[str] = None,
        round_index: Optional[int] = None,
    ):
        context = []
        if method is not None:
            context.append(f"method={method}")
        if seed is not None:
            context.append(f"seed={seed}")
        if round_index is not None:
            context.append(f"round={round_index}")
        suffix = f" [{', '.join(context)}]" if context else ""
        super().__init__(f"{message}{suffix}")
        self.seed = seed
        self.method = method
        self.round_index = round_index
