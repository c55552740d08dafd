"""Exception types shared across the toolkit."""


class SlcError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(SlcError):
    """An input violates a documented precondition or invariant."""


class FormatError(SlcError):
    """A file does not conform to its expected on-disk format."""


class UnsupportedFormatError(FormatError):
    """A file is well-formed but uses an encoding we do not handle."""


class DegenerateInputError(SlcError):
    """An input is structurally valid but carries no usable signal."""


class GeometryError(SlcError):
    """An array geometry breaks the lag-range budget of the correlator."""


class IngestionError(SlcError):
    """A dataset directory or manifest cannot be turned into usable rows."""


class ConfigError(SlcError):
    """A configuration file or override is invalid."""
