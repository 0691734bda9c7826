"""Exception hierarchy shared by every stage of the toolkit."""

from __future__ import annotations


class DriveSenseError(Exception):
    """Base class for all errors raised by drivesense."""


class ParseError(DriveSenseError, ValueError):
    """Malformed input row. ``line`` is 1-based and counts the header."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(ParseError):
    """Input is well formed but violates a field constraint or column contract."""


class DomainError(DriveSenseError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class RangeError(DriveSenseError, ValueError):
    """Query outside the covered range (time or space)."""


class ConfigError(DriveSenseError, ValueError):
    pass


class OrderingError(DriveSenseError):
    """Frame timestamps did not strictly increase within a tracking session."""


class SessionNotFound(DriveSenseError, KeyError):
    def __str__(self) -> str:  # KeyError repr-quotes its argument
        return str(self.args[0]) if self.args else "session not found"


class InsufficientData(DriveSenseError):
    pass


class SimulationError(DriveSenseError):
    def __init__(self, message: str, step: int):
        self.step = step
        super().__init__(f"step {step}: {message}")


class CorrelationUndefined(DriveSenseError, ValueError):
    pass


class ScenarioError(DriveSenseError):
    pass


class StageError(DriveSenseError):
    """A pipeline stage failed; carries the stage name and frame id."""

    def __init__(self, stage: str, frame_id: str | None, cause: BaseException | str):
        self.stage = stage
        self.frame_id = frame_id
        self.cause = cause
        where = f" at frame {frame_id}" if frame_id is not None else ""
        super().__init__(f"stage '{stage}' failed{where}: {cause}")


class ServiceError(DriveSenseError):
    """Base for remote service failures seen by a client."""

    def __init__(self, message: str, status: int | None = None, frame_id: str | None = None):
        self.status = status
        self.frame_id = frame_id
        super().__init__(message)


class ServiceTimeout(ServiceError):
    pass


class ServiceUnavailable(ServiceError):
    """Endpoint could not be reached at all."""


class ServiceClientError(ServiceError):
    """The server rejected the request (4xx)."""


class ServiceNotFound(ServiceClientError):
    pass


class ServiceConflict(ServiceClientError):
    """409: out-of-order frame or a session busy with another request."""


class ServiceServerError(ServiceError):
    """The server failed while handling a valid request (5xx)."""


class DetectorFailure(ServiceServerError):
    """A detector raised while processing a map."""
