"""Empirical checks of linearized stability for infinite-dimensional flows."""
from .core import (
    FrechetReport,
    SequenceState,
    SpectralField,
    StabilityClass,
    StabilityVerdict,
    Trajectory,
    l2_norm,
    state_axpy,
)

__version__ = "0.1.0"

__all__ = [
    "FrechetReport",
    "SequenceState",
    "SpectralField",
    "StabilityClass",
    "StabilityVerdict",
    "Trajectory",
    "l2_norm",
    "state_axpy",
]
