"""Exception hierarchy shared by all sclifd modules."""


class SclifdError(Exception):
    """Base class for every error raised deliberately by this package."""


class DataError(SclifdError, ValueError):
    """Malformed or insufficient input data."""


class ConfigError(SclifdError, ValueError):
    """Invalid run configuration; carries the offending field path."""

    def __init__(self, message, path=None):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class ShapeError(SclifdError, ValueError):
    """Array shapes do not agree."""


class NumericalError(SclifdError, FloatingPointError):
    """Non-finite values or a degenerate (zero-norm) vector."""
