"""Visibility extraction, reduced-coordinate aggregation and coherence fits."""

from .fitting import (
    DegenerateDataError,
    FitConvergenceError,
    FitResult,
    InitializationError,
    circ_jacobian,
    circ_model,
    circ_wavenumber,
    fit_circ_coherence,
    fit_gaussian_coherence,
    gaussian_jacobian,
    gaussian_model,
)
from .lm import LMResult, levenberg_marquardt
from .visibility import (
    AggregationConsistencyError,
    EstimatorFailure,
    InsufficientFringes,
    InterferogramVisibility,
    SpectralVisibility,
    VisibilityAboveUnity,
    VisibilityPoint,
    aggregate_reduced,
    local_envelope,
    visibility_from_interferogram,
    visibility_from_spectrum,
)
from .io import format_visibility_csv, read_visibility_csv, write_visibility_csv

__all__ = [name for name in dir() if not name.startswith("_")]
