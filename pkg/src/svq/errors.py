"""Exception types raised across the package."""


class SvqError(Exception):
    """Base class for all errors raised by svq."""


class InvalidPoseError(SvqError, ValueError):
    pass


class InvalidPointError(SvqError, ValueError):
    pass


class ScaleMismatchError(SvqError, ValueError):
    pass


class DimensionError(SvqError, ValueError):
    pass


class InvariantError(SvqError, RuntimeError):
    """An internal invariant was violated; indicates a bug, not bad input."""


class FrameOrderError(SvqError, ValueError):
    pass


class FormatError(SvqError, ValueError):
    """Malformed file content. ``position`` is a byte offset or line number."""

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at {position})"
        super().__init__(message)
        self.position = position
