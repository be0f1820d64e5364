class ManRecError(Exception):
    """Base class for errors raised by man-rec."""


class ShapeError(ManRecError, ValueError):
    """Operands have incompatible shapes."""


class EmptyAttentionError(ManRecError, ValueError):
    """An attention query has no valid key to attend to."""


class NonFiniteError(ManRecError, ArithmeticError):
    """A NaN or infinity showed up where a finite value was required."""


class DataFormatError(ManRecError, ValueError):
    """An input file could not be parsed."""

    def __init__(self, path: str, line: int | None, message: str) -> None:
        location = path if line is None else f"{path}:{line}"
        super().__init__(f"{location}: {message}")
        self.path = path
        self.line = line


class CheckpointError(ManRecError, ValueError):
    """A checkpoint is malformed or does not match the model it is loaded into."""


class ConfigError(ManRecError, ValueError):
    """A configuration file or value is invalid."""


class NegativeSamplingError(ManRecError, ValueError):
    """A user has too few items left to draw the requested negatives from."""
