"""Exception hierarchy shared by every module."""


class CoordinationError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(CoordinationError, ValueError):
    pass


class OutOfRangeError(ValidationError):
    pass


class DegenerateObjectiveError(ValidationError):
    """Objective has no positive maximum, so it cannot be normalized."""


class InsufficientDataError(ValidationError):
    pass


class ProtocolError(CoordinationError):
    """A message is well-formed JSON but violates the coordination protocol."""


class FrameError(ProtocolError):
    """A wire frame could not be parsed as a JSON object."""


class EncodeError(CoordinationError, ValueError):
    pass


class ReplayError(CoordinationError):
    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


class ScenarioError(CoordinationError):
    """Scenario file failed to parse or validate; ``lineno`` anchors the diagnostic."""

    def __init__(self, message, path=None, lineno=None):
        self.path = path
        self.lineno = lineno
        self.reason = message
        prefix = ""
        if path is not None:
            prefix = f"{path}:{lineno}: " if lineno is not None else f"{path}: "
        super().__init__(prefix + message)
