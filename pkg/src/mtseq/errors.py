"""Exception types shared across the toolkit."""


class MtseqError(Exception):
    """Base class for all toolkit errors."""


class ShapeError(MtseqError, ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class DataError(MtseqError, ValueError):
    """Corpus or vocabulary input violates the expected format."""


class ConfigError(MtseqError, ValueError):
    """Run configuration is invalid; message enumerates every problem found."""


class CorruptFileError(MtseqError, IOError):
    """A model or checkpoint container failed its integrity checks."""


class DivergenceError(MtseqError, ArithmeticError):
    """Training produced a non-finite loss."""
