"""Entity trajectory toolkit: 6DoF pose sequences, surround-camera capture,
dataset manifests, a toy trajectory injector and annealed guided sampling."""

from .errors import (
    CompositionError,
    DegenerateTangentError,
    LengthMismatchError,
    NumericError,
    ParseError,
    PoseValidationError,
    SamplerError,
    TrajkitError,
    ValidationError,
)
from .pose import Pose, PoseSequence

__all__ = [
    "CompositionError",
    "DegenerateTangentError",
    "LengthMismatchError",
    "NumericError",
    "ParseError",
    "Pose",
    "PoseSequence",
    "PoseValidationError",
    "SamplerError",
    "TrajkitError",
    "ValidationError",
]
