"""Photon blockade in a single three-level atom coupled to a driven cavity (cavity EIT)
with an intracavity Stark shift of one ground state."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BoundaryWarning,
    ConfigError,
    ConvergenceError,
    DegeneracyError,
    InvalidArgumentError,
    SweepError,
    TruncationWarning,
    UndefinedTransmissionError,
)
from .model import ModelParams, Variant  # noqa: E402

__all__ = [
    "__version__",
    "ModelParams",
    "Variant",
    "BoundaryWarning",
    "ConfigError",
    "ConvergenceError",
    "DegeneracyError",
    "InvalidArgumentError",
    "SweepError",
    "TruncationWarning",
    "UndefinedTransmissionError",
]
