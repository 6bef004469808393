"""Exception hierarchy shared by all modules."""


class SwsError(Exception):
    """Base class for every error raised by :mod:`swsmap`."""


class FormatError(SwsError, ValueError):
    """A file on disk does not follow the expected layout."""


class DataError(SwsError, ValueError):
    """Array contents violate an invariant (non-finite samples, bad shape)."""


class ParameterError(SwsError, ValueError):
    """A parameter is outside its allowed range."""


class CleaningError(SwsError):
    """TL-plane cleaning could not fit its wavefront model to a slice."""


class UsageError(SwsError, ValueError):
    """A function was called in a way its contract does not allow."""
