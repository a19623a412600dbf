"""Riemannian geometry for shape analysis: landmarks, curves and surfaces."""

__version__ = "0.1.0"

from . import geometry, quotient, landmarks, curves, surfaces, learning  # noqa: E402,F401
from .geometry import (  # noqa: E402,F401
    ConvergenceError,
    ConvergenceWarning,
    CutLocusError,
    Euclidean,
    GeometryError,
    Hypersphere,
)
