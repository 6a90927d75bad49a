"""Dataset-level analysis: pick the right estimator and model for each scan mode."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from .analysis import (
    FitResult,
    VisibilityPoint,
    aggregate_reduced,
    fit_circ_coherence,
    fit_gaussian_coherence,
    visibility_from_interferogram,
    visibility_from_spectrum,
)
from .analysis.fitting import FitConvergenceError
from .scan import ScanDataset

__all__ = ["AnalysisSettings", "extract_visibilities", "fit_dataset", "fit_points"]

ESTIMATORS = ("auto", "interferogram", "spectrum_window", "reduced")
MODELS = ("auto", "gaussian", "circ")
WAVELENGTH_MODES = ("auto", "reduced", "at_lambda0")
#: Thermal interferograms need a curved envelope; see visibility_from_interferogram.
THERMAL_ENVELOPE_DEGREE = 6


@dataclass(frozen=True)
class AnalysisSettings:
    """Options of the ``analysis`` config section; ``auto`` follows the scan mode."""

    estimator: str = "auto"
    envelope_degree: int | None = None
    window_periods: float | None = None
    half_window_m: float = 40e-9
    step_fraction: float = 0.5
    max_jump: float = 0.1
    model: str = "auto"
    wavelength_mode: str = "auto"
    focal_f_m: float | None = None
    radius_init_m: float | None = None
    delta_init_m: float | None = None

    def __post_init__(self):
        for name, allowed in (("estimator", ESTIMATORS), ("model", MODELS), ("wavelength_mode", WAVELENGTH_MODES)):
            if getattr(self, name) not in allowed:
                raise ValueError(f"analysis.{name} must be one of {allowed}, got {getattr(self, name)!r}")
        if self.envelope_degree is not None and not (isinstance(self.envelope_degree, int) and self.envelope_degree >= 0):
            raise ValueError("analysis.envelope_degree must be a non-negative integer")
        if not 0 < self.step_fraction <= 1:
            raise ValueError("analysis.step_fraction must lie in (0, 1]")
        if not self.half_window_m > 0 or not self.max_jump > 0:
            raise ValueError("analysis.half_window_m and analysis.max_jump must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict | None) -> "AnalysisSettings":
        data = dict(data or {})
        unknown = set(data) - {f.name for f in fields(cls)}
        if unknown:
            raise KeyError(f"unknown analysis keys: {sorted(unknown)}")
        return cls(**data)

    def resolved(self, mode: str) -> "AnalysisSettings":
        """Replace every ``auto`` / ``None`` with the default for ``mode``."""
        est = self.estimator
        if est == "auto":
            est = "reduced" if mode == "thermal_spectrum" else "interferogram"
        if mode == "thermal_spectrum" and est == "interferogram":
            raise ValueError("spectral datasets need the 'reduced' or 'spectrum_window' estimator")
        if mode != "thermal_spectrum" and est != "interferogram":
            raise ValueError(f"{mode} datasets need the 'interferogram' estimator")
        degree = self.envelope_degree
        if degree is None:
            degree = THERMAL_ENVELOPE_DEGREE if mode == "thermal_interferogram" else 0
        model = self.model
        if model == "auto":
            model = "gaussian" if mode == "spdc_coincidence" else "circ"
        wl = self.wavelength_mode
        if wl == "auto":
            wl = "reduced" if est == "reduced" else "at_lambda0"
        return AnalysisSettings(
            estimator=est,
            envelope_degree=degree,
            window_periods=self.window_periods,
            half_window_m=self.half_window_m,
            step_fraction=self.step_fraction,
            max_jump=self.max_jump,
            model=model,
            wavelength_mode=wl,
            focal_f_m=self.focal_f_m,
            radius_init_m=self.radius_init_m,
            delta_init_m=self.delta_init_m,
        )


def extract_visibilities(dataset: ScanDataset, settings: AnalysisSettings | None = None) -> list[VisibilityPoint]:
    """Visibility versus shear (or reduced shear) for every point of ``dataset``."""
    s = (settings or AnalysisSettings()).resolved(dataset.mode)
    plan = dataset.plan
    if s.estimator == "reduced":
        return aggregate_reduced(dataset.spectrum_traces(), plan.source, s.step_fraction, s.max_jump)
    if s.estimator == "spectrum_window":
        out = []
        for trace in dataset.spectrum_traces():
            est = visibility_from_spectrum(trace, plan.source.baseline, trace.tau, s.half_window_m)
            out.append(VisibilityPoint(trace.delta_y, est.visibility, est.uncertainty))
        return out
    omega0 = plan.source.omega0
    out = []
    for dy, tau, signal in dataset.interferograms():
        est = visibility_from_interferogram(tau, signal, omega0, s.envelope_degree, s.window_periods)
        out.append(VisibilityPoint(dy, est.visibility, est.uncertainty))
    return out


def fit_points(points, dataset: ScanDataset, settings: AnalysisSettings | None = None) -> FitResult:
    """Fit the model chosen by ``settings`` and stamp the dataset fingerprint."""
    s = (settings or AnalysisSettings()).resolved(dataset.mode)
    source = dataset.plan.source
    provenance = dataset.fingerprint()
    try:
        if s.model == "gaussian":
            result = fit_gaussian_coherence(points, s.delta_init_m)
        else:
            focal = s.focal_f_m if s.focal_f_m is not None else source.focal_f
            lambda0 = source.downconv_wavelength_lambda0 if dataset.mode == "spdc_coincidence" else source.lambda0
            result = fit_circ_coherence(points, focal, s.wavelength_mode, lambda0, s.radius_init_m)
    except FitConvergenceError as exc:
        exc.result.provenance = provenance
        exc.result.meta["analysis"] = s.to_dict()
        raise
    result.provenance = provenance
    result.meta["analysis"] = s.to_dict()
    return result


def fit_dataset(dataset: ScanDataset, settings: AnalysisSettings | None = None) -> tuple[FitResult, list[VisibilityPoint]]:
    points = extract_visibilities(dataset, settings)
    return fit_points(points, dataset, settings), points
