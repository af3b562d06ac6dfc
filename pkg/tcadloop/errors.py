from __future__ import annotations

from typing import Optional


class TcadLoopError(Exception):
    """Base class for every error raised by tcadloop."""


class ConfigError(TcadLoopError):
    pass


class InvalidParams(TcadLoopError):
    pass


class UnrepairableParams(TcadLoopError):
    pass


class UnsupportedSweep(TcadLoopError):
    pass


class EmptySelection(TcadLoopError):
    pass


class ParseError(TcadLoopError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class InvariantError(TcadLoopError):
    pass


class MetricsError(TcadLoopError):
    pass


class RangeError(MetricsError):
    pass


class DegenerateCurve(MetricsError):
    pass


class NonMonotonic(MetricsError):
    pass


class NoJsonFound(TcadLoopError):
    pass


class SchemaError(TcadLoopError):
    pass


class EmptyHistory(TcadLoopError):
    pass


class TransportError(TcadLoopError):
    pass


class ProposalError(TcadLoopError):
    pass


class ExhaustedSpace(TcadLoopError):
    pass


class FatalBackendError(TcadLoopError):
    pass


class BackendIOError(FatalBackendError):
    pass


class CorruptTrajectory(TcadLoopError):
    def __init__(self, message: str, line: int):
        self.line = line
        super().__init__(f"trajectory line {line}: {message}")


class NonConvergentParams(InvalidParams):
    """Band diagrams were requested for a design the solver rules reject."""
