"""
flowpriors: physical priors for human scene flow.

Dense per-pixel fields, camera and skeleton models, six differentiable
physical-prior constraints with analytic gradients, evaluation metrics, a
synthetic generator with exact flow ground truth, and a direct-descent demo.
"""

from .errors import (
    ClipIOError,
    CorruptionError,
    FlowPriorsError,
    FormatError,
    NumericError,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "ClipIOError",
    "CorruptionError",
    "FlowPriorsError",
    "FormatError",
    "NumericError",
    "ValidationError",
    "__version__",
]
