"""Exception types."""


class SdpmixError(Exception):
    """Base class for all package errors."""


class ValidationError(SdpmixError):
    """Problem data violates an invariant (reported with block/constraint index)."""


class FormatError(SdpmixError):
    """Malformed input file."""

    def __init__(self, message: str, path=None, line=None):
        loc = ""
        if path is not None:
            loc += str(path)
        if line is not None:
            loc += f":{line}"
        super().__init__(f"{loc}: {message}" if loc else message)
        self.path = path
        self.line = line


class NumericalError(SdpmixError):
    """Nonfinite iterate or a numerical routine failed to converge."""
