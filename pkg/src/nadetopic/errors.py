"""Exception hierarchy shared by the library and the command line."""


class NadeTopicError(Exception):
    """Base class for every error raised by nadetopic."""


class ValidationError(NadeTopicError, ValueError):
    """An argument or record violates a documented precondition."""


class BoundsError(ValidationError, IndexError):
    """An index falls outside its vocabulary or tree range."""


class ShapeMismatchError(ValidationError):
    """Parameters and data disagree on a dimension."""


class FormatError(NadeTopicError):
    """A file does not follow its on-disk format (bad magic, truncation, bad checksum)."""
