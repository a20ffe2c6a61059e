"""
Exception hierarchy for the quantum uplink toolkit.

Every error raised on purpose by the library derives from QuantumUplinkError so
the CLI can map it to a stable exit code.
"""

from typing import Iterable, Optional


class QuantumUplinkError(Exception):
    """Base class for toolkit errors."""

    exit_code = 1


class DomainError(QuantumUplinkError, ValueError):
    """A physical input lies outside the domain of a formula."""


class ScenarioError(QuantumUplinkError):
    """A scenario file could not be loaded or is inconsistent."""


class EmptyWindowError(QuantumUplinkError):
    """The pass never satisfies the link window constraints."""

    exit_code = 3


class StreamFormatError(QuantumUplinkError):
    """A time-tag file or pulse log violates its format."""

    exit_code = 5

    def __init__(self, message: str, offset: Optional[int] = None, line: Optional[int] = None):
        where = f"line {line}" if line is not None else f"byte offset {offset}"
        super().__init__(f"{message} (at {where})")
        self.offset = offset
        self.line = line


class NoCorrelationError(QuantumUplinkError):
    """No significant cross-correlation peak between ground and space."""

    exit_code = 6


class CorrelationLostError(QuantumUplinkError):
    """The coarse peak could not be confirmed at fine resolution."""

    exit_code = 6


class InsufficientSegmentsError(QuantumUplinkError):
    """Drift tracking found fewer than two segments with a significant peak."""

    exit_code = 6


class InsufficientCountsError(QuantumUplinkError):
    """A statistic was requested without the counts it needs."""

    def __init__(self, message: str, missing: Optional[Iterable] = None):
        self.missing = list(missing or [])
        if self.missing:
            message = f"{message}: {self.missing}"
        super().__init__(message)
