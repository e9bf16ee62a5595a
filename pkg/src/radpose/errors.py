"""Exception hierarchy shared across the package."""


class RadposeError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(RadposeError, ValueError):
    """An operand has an incompatible shape or dimension layout."""


class ConfigError(RadposeError, ValueError):
    """A configuration file or value violates the schema."""


class CubeFormatError(RadposeError, ValueError):
    """Base class for radar-cube file format problems."""


class BadMagicError(CubeFormatError):
    """File does not start with the expected magic bytes."""


class DimOverflowError(CubeFormatError):
    """Header declares dimensions too large to be a real cube."""


class TruncatedPayloadError(CubeFormatError):
    """Payload is shorter than the header-declared dimensions require."""


class GradientError(RadposeError, RuntimeError):
    """A gradient became non-finite during optimization."""
