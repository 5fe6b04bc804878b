"""Exception types raised by tsdbench."""


class FrameIOError(OSError):
    """Base class for frame file errors; ``path`` names the offending file."""

    def __init__(self, path, message):
        self.path = str(path)
        super().__init__(f"{self.path}: {message}")


class MissingFileError(FrameIOError):
    pass


class UnsupportedFormatError(FrameIOError):
    pass


class CorruptFrameError(FrameIOError):
    pass


class UnwritablePathError(FrameIOError):
    pass


class AnnotationFormatError(ValueError):
    """Malformed annotation or prediction record.

    ``lineno`` is 1-based and ``None`` for file-level problems.
    """

    def __init__(self, path, lineno, message):
        self.path = str(path)
        self.lineno = lineno
        where = self.path if lineno is None else f"{self.path}:{lineno}"
        super().__init__(f"{where}: {message}")


class UndefinedCorrelationError(ValueError):
    """Raised when a rank correlation has a constant input series."""


class GridError(ValueError):
    """A type x level grid is ragged, incomplete or mismatched."""
