"""Exception types shared across the engine."""


class IECD2Error(Exception):
    """Base class for all engine errors."""


class ConfigurationError(IECD2Error):
    """Invalid configuration value or combination of values."""


class InputError(IECD2Error):
    """Malformed or out-of-range input data."""


class PreconditionError(InputError):
    """A documented operation precondition was violated by the caller."""


class TraceFormatError(InputError):
    """Unreadable trace file.

    ``step`` carries the index of the offending step record when the
    failure happened past the header, otherwise None.
    """

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class EndOfTraceError(IECD2Error):
    """A replay session was asked for logits past the last recorded step."""
