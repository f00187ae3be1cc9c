"""Exception types shared across the pipeline."""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(PipelineError):
    """A tensor or raster shape violates an operation's contract."""


class ParameterError(PipelineError):
    """A numeric parameter is outside its documented range."""


class EmptyTargetError(PipelineError):
    """Scanline location found no row or column with enough foreground."""


class IngestionError(PipelineError):
    """A manifest references a file that cannot be read."""


class SplitError(PipelineError):
    """A dataset split cannot be performed (e.g. a class with < 2 samples)."""


class DivergenceError(PipelineError):
    """Training produced a non-finite loss or gradient."""

    def __init__(self, message, layer=None):
        super().__init__(message)
        self.layer = layer
