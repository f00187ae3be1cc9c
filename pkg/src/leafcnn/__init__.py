"""Leaf-disease image recognition pipeline: segmentation, augmentation,
a from-scratch CNN with LRN and dropout, and SVM/BP baselines."""

__version__ = "0.1.0"

from .errors import (
    DivergenceError,
    EmptyTargetError,
    IngestionError,
    ParameterError,
    PipelineError,
    ShapeError,
    SplitError,
)
from .rng import Rng

__all__ = [
    "DivergenceError",
    "EmptyTargetError",
    "IngestionError",
    "ParameterError",
    "PipelineError",
    "Rng",
    "ShapeError",
    "SplitError",
    "__version__",
]
