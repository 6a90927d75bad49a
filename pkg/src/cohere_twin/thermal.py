"""Classical thermal-source model: spectra, coherence kernels and interferograms.

A uniformly illuminated circular source of radius ``r`` behind a lens of
focal length ``f`` has spatial coherence ``jinc(2 pi r dy / (f lambda))``.
Sheared and delayed replicas recombine into a spectrum
``S0(lambda) [1 + mu(dy, lambda) cos(2 pi c tau / lambda)]`` or, on a photon
counter, into an interferogram whose envelope factorises into temporal and
spatial coherence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.ndimage import gaussian_filter1d

from .geometry import SPEED_OF_LIGHT
from .specfun import jinc

__all__ = [
    "GaussianBaseline",
    "TabulatedBaseline",
    "baseline_from_dict",
    "ThermalSourceSpec",
    "SpectrumTrace",
    "ReducedSpectrum",
    "mu_circ",
    "mu_circ_reduced",
    "spectrum_model",
    "apply_resolution",
    "reduced_spectrum",
    "temporal_coherence",
    "interferogram_model",
]

FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))
_TAIL_SIGMAS = 9.0


@dataclass(frozen=True)
class GaussianBaseline:
    """Gaussian spectral density, Gaussian either in frequency or in wavelength.

    ``domain="frequency"`` centres the Gaussian at ``c / center`` with FWHM
    ``c * fwhm / center**2``. Both ``density_*`` methods are relative
    densities equal to 1 at the centre.
    """

    center: float
    fwhm: float
    domain: str = "frequency"

    def __post_init__(self):
        if self.domain not in ("frequency", "wavelength"):
            raise ValueError(f"domain must be 'frequency' or 'wavelength', got {self.domain!r}")
        if not 0 < self.fwhm < self.center:
            raise ValueError("need 0 < fwhm < center")

    @property
    def center_wavelength(self) -> float:
        return self.center

    @property
    def _nu0(self) -> float:
        return SPEED_OF_LIGHT / self.center

    @property
    def _sigma_nu(self) -> float:
        return SPEED_OF_LIGHT * self.fwhm / self.center**2 * FWHM_TO_SIGMA

    def density_lambda(self, lam):
        lam = np.asarray(lam, dtype=float)
        if self.domain == "wavelength":
            s = self.fwhm * FWHM_TO_SIGMA
            return np.exp(-0.5 * ((lam - self.center) / s) ** 2)
        nu = SPEED_OF_LIGHT / lam
        return np.exp(-0.5 * ((nu - self._nu0) / self._sigma_nu) ** 2) * (self.center / lam) ** 2

    def density_nu(self, nu):
        nu = np.asarray(nu, dtype=float)
        if self.domain == "frequency":
            return np.exp(-0.5 * ((nu - self._nu0) / self._sigma_nu) ** 2)
        lam = SPEED_OF_LIGHT / nu
        return self.density_lambda(lam) * (lam / self.center) ** 2

    def frequency_support(self) -> tuple[float, float]:
        if self.domain == "frequency":
            lo = max(self._nu0 - _TAIL_SIGMAS * self._sigma_nu, 1e-3 * self._nu0)
            return lo, self._nu0 + _TAIL_SIGMAS * self._sigma_nu
        s = self.fwhm * FWHM_TO_SIGMA
        lam_lo = max(self.center - _TAIL_SIGMAS * s, 1e-3 * self.center)
        lam_hi = self.center + _TAIL_SIGMAS * s
        return SPEED_OF_LIGHT / lam_hi, SPEED_OF_LIGHT / lam_lo

    def to_dict(self) -> dict:
        return {"kind": "gaussian", "center_m": self.center, "fwhm_m": self.fwhm, "domain": self.domain}


@dataclass(frozen=True)
class TabulatedBaseline:
    """Measured spectral density on a wavelength grid, linearly interpolated, zero outside."""

    wavelengths: tuple
    values: tuple

    def __post_init__(self):
        lam = np.asarray(self.wavelengths, dtype=float)
        val = np.asarray(self.values, dtype=float)
        if lam.ndim != 1 or lam.shape != val.shape or lam.size < 2:
            raise ValueError("wavelengths and values must be equal-length 1-D sequences")
        if np.any(np.diff(lam) <= 0):
            raise ValueError("baseline wavelengths must be strictly increasing")
        if np.any(val < 0) or not np.any(val > 0):
            raise ValueError("baseline values must be non-negative and not all zero")
        object.__setattr__(self, "wavelengths", tuple(float(x) for x in lam))
        object.__setattr__(self, "values", tuple(float(x) for x in val))

    @property
    def center_wavelength(self) -> float:
        return self.wavelengths[int(np.argmax(self.values))]

    def density_lambda(self, lam):
        return np.interp(np.asarray(lam, dtype=float), self.wavelengths, self.values, left=0.0, right=0.0)

    def density_nu(self, nu):
        lam = SPEED_OF_LIGHT / np.asarray(nu, dtype=float)
        return self.density_lambda(lam) * (lam / self.center_wavelength) ** 2

    def frequency_support(self) -> tuple[float, float]:
        return SPEED_OF_LIGHT / self.wavelengths[-1], SPEED_OF_LIGHT / self.wavelengths[0]

    def to_dict(self) -> dict:
        return {"kind": "tabulated", "wavelengths_m": list(self.wavelengths), "values": list(self.values)}


def baseline_from_dict(data: dict):
    kind = data.get("kind")
    if kind == "gaussian":
        return GaussianBaseline(float(data["center_m"]), float(data["fwhm_m"]), data.get("domain", "frequency"))
    if kind == "tabulated":
        return TabulatedBaseline(tuple(data["wavelengths_m"]), tuple(data["values"]))
    raise ValueError(f"unknown baseline kind {kind!r}")


@dataclass(frozen=True)
class ThermalSourceSpec:
    """Halogen-lamp source behind an iris, collimated by a lens.

    Defaults: 680 nm centre, 150 nm FWHM, 1 mm diameter iris, 500 mm lens.
    Without an explicit baseline the spectrum is a frequency-domain Gaussian
    with the given centre and width.
    """

    lambda0: float = 680e-9
    fwhm_dlambda: float = 150e-9
    source_radius_r: float = 0.5e-3
    focal_f: float = 0.5
    baseline: GaussianBaseline | TabulatedBaseline = field(default=None)

    def __post_init__(self):
        if not self.lambda0 > 0:
            raise ValueError("lambda0 must be positive")
        if not 0 < self.fwhm_dlambda < self.lambda0:
            raise ValueError("need 0 < fwhm_dlambda < lambda0")
        if not self.source_radius_r > 0:
            raise ValueError("source_radius_r must be positive")
        if not self.focal_f > 0:
            raise ValueError("focal_f must be positive")
        if self.baseline is None:
            object.__setattr__(self, "baseline", GaussianBaseline(self.lambda0, self.fwhm_dlambda))

    @property
    def omega0(self) -> float:
        return 2.0 * math.pi * SPEED_OF_LIGHT / self.lambda0

    @property
    def longitudinal_coherence_length(self) -> float:
        return self.lambda0**2 / self.fwhm_dlambda

    @property
    def coherence_time(self) -> float:
        return self.longitudinal_coherence_length / SPEED_OF_LIGHT

    def to_dict(self) -> dict:
        return {
            "lambda0_m": self.lambda0,
            "fwhm_dlambda_m": self.fwhm_dlambda,
            "source_radius_r_m": self.source_radius_r,
            "focal_f_m": self.focal_f,
            "baseline": self.baseline.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ThermalSourceSpec":
        keys = {
            "lambda0_m": "lambda0",
            "fwhm_dlambda_m": "fwhm_dlambda",
            "source_radius_r_m": "source_radius_r",
            "focal_f_m": "focal_f",
        }
        unknown = set(data) - set(keys) - {"baseline"}
        if unknown:
            raise KeyError(f"unknown thermal source keys: {sorted(unknown)}")
        kwargs = {keys[k]: float(v) for k, v in data.items() if k in keys}
        if data.get("baseline") is not None:
            kwargs["baseline"] = baseline_from_dict(data["baseline"])
        return cls(**kwargs)


@dataclass(eq=False)
class SpectrumTrace:
    wavelength_grid: np.ndarray
    intensity: np.ndarray
    tau: float
    delta_y: float

    def __post_init__(self):
        self.wavelength_grid = np.asarray(self.wavelength_grid, dtype=float)
        self.intensity = np.asarray(self.intensity, dtype=float)
        if self.wavelength_grid.shape != self.intensity.shape or self.wavelength_grid.ndim != 1:
            raise ValueError("wavelength_grid and intensity must be equal-length 1-D arrays")
        if np.any(np.diff(self.wavelength_grid) <= 0):
            raise ValueError("wavelength_grid must be strictly increasing")


@dataclass(eq=False)
class ReducedSpectrum:
    """Normalised spectrum on the reduced axis ``dy / lambda`` (ascending)."""

    delta_y_reduced: np.ndarray
    normalized: np.ndarray
    tau: float
    delta_y: float
    dropped: int = 0

    @property
    def fringe_period(self) -> float:
        """Fringe period along the reduced axis, ``dy / (c tau)``."""
        return self.delta_y / (SPEED_OF_LIGHT * abs(self.tau))


def mu_circ(delta_y, wavelength, spec: ThermalSourceSpec):
    """Spatial coherence of the circular source at shear ``delta_y`` and ``wavelength``."""
    z = 2.0 * math.pi * spec.source_radius_r * np.asarray(delta_y) / (spec.focal_f * np.asarray(wavelength))
    return jinc(z)


def mu_circ_reduced(delta_y_reduced, spec: ThermalSourceSpec):
    """Spatial coherence on the reduced axis ``delta_y / lambda``."""
    z = 2.0 * math.pi * spec.source_radius_r * np.asarray(delta_y_reduced) / spec.focal_f
    return jinc(z)


def _modulated(lam, tau, delta_y, spec, visibility_scale=1.0):
    mu = visibility_scale * mu_circ(delta_y, lam, spec)
    return spec.baseline.density_lambda(lam) * (1.0 + mu * np.cos(2.0 * math.pi * SPEED_OF_LIGHT * tau / lam))


def spectrum_model(
    wavelength_grid,
    tau: float,
    delta_y: float,
    spec: ThermalSourceSpec,
    resolution_fwhm: float | None = None,
    visibility_scale: float = 1.0,
) -> SpectrumTrace:
    """Fringe-modulated spectrum; coherence is evaluated at every wavelength sample.

    With ``resolution_fwhm`` the spectrum is convolved with a Gaussian
    instrument profile; the grid must then be uniform. The model is evaluated
    on a padded grid first so the convolution has no edge artefacts.
    ``visibility_scale`` multiplies the fringe contrast (instrumental loss).
    """
    lam = np.asarray(wavelength_grid, dtype=float)
    if not resolution_fwhm:
        return SpectrumTrace(lam, _modulated(lam, tau, delta_y, spec, visibility_scale), tau, delta_y)
    return apply_resolution(lam, tau, delta_y, spec, resolution_fwhm, visibility_scale)


def apply_resolution(lam, tau, delta_y, spec, resolution_fwhm: float, visibility_scale=1.0) -> SpectrumTrace:
    step = np.diff(lam)
    if lam.size < 2 or not np.allclose(step, step[0], rtol=1e-6, atol=0):
        raise ValueError("spectrometer resolution needs a uniform wavelength grid")
    sigma = resolution_fwhm * FWHM_TO_SIGMA / step[0]
    pad = int(math.ceil(5 * sigma)) + 1
    ext = lam[0] + step[0] * np.arange(-pad, lam.size + pad)
    blurred = gaussian_filter1d(_modulated(ext, tau, delta_y, spec, visibility_scale), sigma, mode="nearest", truncate=5.0)
    return SpectrumTrace(lam, blurred[pad:-pad], tau, delta_y)


def reduced_spectrum(trace: SpectrumTrace, spec: ThermalSourceSpec) -> ReducedSpectrum:
    """Map ``(lambda, S)`` to ``(dy / lambda, S / S0)``, sorted by the reduced coordinate.

    Samples where the baseline vanishes are dropped and counted.
    """
    if not trace.delta_y > 0:
        raise ValueError("reduced coordinates need delta_y > 0")
    s0 = spec.baseline.density_lambda(trace.wavelength_grid)
    keep = s0 > 0
    lam = trace.wavelength_grid[keep]
    ratio = trace.intensity[keep] / s0[keep]
    # increasing lambda means decreasing reduced coordinate
    return ReducedSpectrum(
        delta_y_reduced=(trace.delta_y / lam)[::-1],
        normalized=ratio[::-1],
        tau=trace.tau,
        delta_y=trace.delta_y,
        dropped=int(np.count_nonzero(~keep)),
    )


@lru_cache(maxsize=64)
def _frequency_quadrature(baseline, n: int):
    lo, hi = baseline.frequency_support()
    nu = np.linspace(lo, hi, n)
    w = np.full(n, (hi - lo) / (n - 1))
    w[0] *= 0.5
    w[-1] *= 0.5
    weights = w * baseline.density_nu(nu)
    total = weights.sum()
    if not total > 0:
        raise ValueError("baseline spectrum is not normalisable")
    weights = weights / total
    nu.setflags(write=False)
    weights.setflags(write=False)
    return nu, weights


def temporal_coherence(tau, spec: ThermalSourceSpec):
    """Magnitude of the normalised Fourier transform of the source spectrum.

    Trapezoid quadrature over the baseline's frequency support; the grid is
    refined with the largest requested delay so the integrand stays resolved.
    """
    taus = np.asarray(tau, dtype=float)
    lo, hi = spec.baseline.frequency_support()
    need = 32.0 * (hi - lo) * float(np.max(np.abs(taus), initial=0.0))
    n = 4097
    while n < need:
        n = 2 * n - 1
    nu, weights = _frequency_quadrature(spec.baseline, n)
    flat = taus.ravel()
    out = np.empty(flat.shape)
    # chunked so the phase matrix stays small
    for start in range(0, flat.size, 256):
        t = flat[start : start + 256]
        phase = 2.0 * math.pi * np.outer(t, nu - nu[0])
        out[start : start + 256] = np.abs(np.cos(phase) @ weights - 1j * (np.sin(phase) @ weights))
    out = np.minimum(out, 1.0).reshape(taus.shape)
    return float(out) if out.ndim == 0 else out


def interferogram_model(
    tau_grid, delta_y: float, phase_phi: float, spec: ThermalSourceSpec, visibility_scale: float = 1.0
):
    """Normalised photon-counter interferogram at fixed shear.

    Returns ``(tau, intensity)``. Intensity lies in ``[0, 2]``.
    """
    tau = np.asarray(tau_grid, dtype=float)
    mu_s = visibility_scale * mu_circ(delta_y, spec.lambda0, spec)
    carrier = np.cos(2.0 * math.pi * SPEED_OF_LIGHT * tau / spec.lambda0 + phase_phi)
    return tau, 1.0 + temporal_coherence(tau, spec) * mu_s * carrier
