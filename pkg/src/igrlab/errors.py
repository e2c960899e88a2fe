"""Exception types shared across the package."""


class IgrlabError(Exception):
    """Base class for all igrlab errors."""


class ConfigurationError(IgrlabError):
    """A config value is invalid or inconsistent."""


class UsageError(IgrlabError):
    """An operation was called with arguments that violate its contract."""


class ShapeError(IgrlabError):
    """Tensor shapes are incompatible for the requested operation."""


class NumericError(IgrlabError):
    """A non-finite value appeared where finite math was required."""


class CorpusFormatError(IgrlabError):
    """A corpus or dataset file is malformed or referentially broken."""


class NotFoundError(IgrlabError):
    """A referenced identity does not exist."""
