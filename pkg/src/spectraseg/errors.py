"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all spectraseg errors."""


class FormatError(ToolkitError):
    """A binary or text file does not conform to its declared format."""


class SingularSystemError(ToolkitError):
    """The 3x3 normal matrix of a Wiener fit is numerically singular."""


class ShapeError(ToolkitError, ValueError):
    """Array shape inconsistent with the operation's contract."""


class SizeError(ToolkitError, ValueError):
    """Patch size invalid (even, or larger than the image)."""


class RankError(ToolkitError, ValueError):
    """Requested component count exceeds what the data supports."""


class DimError(ToolkitError, ValueError):
    """Vector or mask dimensions do not match."""


class DataError(ToolkitError, ValueError):
    """Dataset violates a precondition (class counts, sample counts)."""


class PadError(ToolkitError, ValueError):
    """Spatial dimensions not divisible as required by pooling."""


class RangeError(ToolkitError, ValueError):
    """Scalar argument outside its documented range."""


class ConfigError(ToolkitError, ValueError):
    """Training or pipeline configuration is unusable."""


class ParseError(ToolkitError):
    """Config file line could not be parsed."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ValidationError(ToolkitError):
    """Config value failed validation."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
