"""Exception hierarchy shared by every stage."""


class GripsetError(Exception):
    """Base class for all package errors."""


class ConfigError(GripsetError):
    """Invalid configuration or arguments."""


class ParseError(GripsetError):
    """Malformed OBJ/PLY input."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class FormatError(GripsetError):
    """Malformed binary grid-set container."""


class SerializationError(GripsetError):
    """A value could not be written (e.g. NaN in a manifest)."""


class InvariantError(GripsetError):
    """An internal invariant was violated; indicates a bug upstream."""

    def __init__(self, message, stage=None):
        self.stage = stage
        if stage is not None:
            message = f"[{stage}] {message}"
        super().__init__(message)
