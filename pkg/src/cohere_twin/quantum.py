"""Spatial correlations of degenerate type-I SPDC photon pairs.

The pump angular spectrum is mapped through the collimation lens onto the
detector plane as ``A(u) = exp(-(pi w u / (lambda0 f))**2)``. The two-photon
correlation under a vertical shear is the normalised overlap of ``A`` with
its shifted copy, which for a Gaussian pump is
``g(dy) = exp(-dy**2 / (2 delta**2))`` with ``delta = lambda0 f / (pi w)``.
Phase matching is treated as flat and the pump as monochromatic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import point_rng
from .geometry import SPEED_OF_LIGHT

__all__ = [
    "QuantumSourceSpec",
    "CoincidenceRecord",
    "coherence_length_delta",
    "pump_profile_at_detector",
    "g_spatial",
    "coincidence_probability",
    "simulate_coincidences",
]


@dataclass(frozen=True)
class QuantumSourceSpec:
    """SPDC source: CW pump, BBO crystal and collimation lens.

    ``downconv_wavelength_lambda0`` defaults to twice the pump wavelength.
    ``crystal_length_L`` is carried for completeness; phase matching is flat.
    """

    pump_wavelength: float = 405e-9
    pump_waist_w: float = 560e-6
    crystal_length_L: float = 3e-3
    focal_f: float = 0.5
    downconv_wavelength_lambda0: float = field(default=None)

    def __post_init__(self):
        if not self.pump_wavelength > 0:
            raise ValueError("pump_wavelength must be positive")
        if not self.pump_waist_w > 0:
            raise ValueError("pump_waist_w must be positive")
        if not self.focal_f > 0:
            raise ValueError("focal_f must be positive")
        lam0 = 2.0 * self.pump_wavelength
        if self.downconv_wavelength_lambda0 is None:
            object.__setattr__(self, "downconv_wavelength_lambda0", lam0)
        elif not math.isclose(self.downconv_wavelength_lambda0, lam0, rel_tol=1e-12):
            raise ValueError(
                "degenerate SPDC requires lambda0 = 2 * pump_wavelength, "
                f"got {self.downconv_wavelength_lambda0} vs {lam0}"
            )

    @property
    def omega0(self) -> float:
        return 2.0 * math.pi * SPEED_OF_LIGHT / self.downconv_wavelength_lambda0

    @classmethod
    def for_coherence_length(cls, delta: float, **kwargs) -> "QuantumSourceSpec":
        """Spec whose pump waist yields the requested coherence length."""
        pump = kwargs.get("pump_wavelength", cls.pump_wavelength)
        f = kwargs.get("focal_f", cls.focal_f)
        w = 2.0 * pump * f / (math.pi * delta)
        return cls(pump_waist_w=w, **kwargs)

    def to_dict(self) -> dict:
        return {
            "pump_wavelength_m": self.pump_wavelength,
            "pump_waist_w_m": self.pump_waist_w,
            "crystal_length_L_m": self.crystal_length_L,
            "focal_f_m": self.focal_f,
            "downconv_wavelength_lambda0_m": self.downconv_wavelength_lambda0,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "QuantumSourceSpec":
        keys = {
            "pump_wavelength_m": "pump_wavelength",
            "pump_waist_w_m": "pump_waist_w",
            "crystal_length_L_m": "crystal_length_L",
            "focal_f_m": "focal_f",
            "downconv_wavelength_lambda0_m": "downconv_wavelength_lambda0",
        }
        unknown = set(data) - set(keys)
        if unknown:
            raise KeyError(f"unknown quantum source keys: {sorted(unknown)}")
        return cls(**{keys[k]: float(v) for k, v in data.items()})


@dataclass(frozen=True)
class CoincidenceRecord:
    """Coincidences at one delay.

    ``counts`` is an integer for binomial counting and the expected
    (real-valued) count for noiseless scans.
    """

    tau: float
    delta_y: float
    counts: float
    window_pairs: int
    seed: int

    def __post_init__(self):
        if self.window_pairs < 1:
            raise ValueError("window_pairs must be >= 1")
        if not 0 <= self.counts <= self.window_pairs:
            raise ValueError(f"counts {self.counts} outside [0, {self.window_pairs}]")


def coherence_length_delta(spec: QuantumSourceSpec) -> float:
    """Transverse coherence length ``lambda0 f / (pi w)``."""
    return spec.downconv_wavelength_lambda0 * spec.focal_f / (math.pi * spec.pump_waist_w)


def pump_profile_at_detector(u, spec: QuantumSourceSpec):
    """Pump angular spectrum mapped to the detector coordinate ``u`` (metres)."""
    a = math.pi * spec.pump_waist_w / (spec.downconv_wavelength_lambda0 * spec.focal_f)
    return np.exp(-((a * np.asarray(u)) ** 2))


def g_spatial(delta_y, spec: QuantumSourceSpec):
    """Normalised pump-overlap correlation; 1 at zero shear, even in ``delta_y``."""
    delta = coherence_length_delta(spec)
    dy = np.asarray(delta_y, dtype=float)
    out = np.exp(-0.5 * (dy / delta) ** 2)
    return float(out) if out.ndim == 0 else out


def coincidence_probability(tau, delta_y, spec: QuantumSourceSpec):
    """Per-pair coincidence probability ``(1 + g(dy) cos(omega0 tau)) / 2``."""
    tau = np.asarray(tau, dtype=float)
    p = 0.5 + 0.5 * g_spatial(delta_y, spec) * np.cos(spec.omega0 * tau)
    p = np.clip(p, 0.0, 1.0)
    return float(p) if p.ndim == 0 else p


def simulate_coincidences(
    tau_grid,
    delta_y: float,
    spec: QuantumSourceSpec,
    pairs_per_point: int,
    seed: int,
    stream: tuple[int, ...] = (),
) -> list[CoincidenceRecord]:
    """Binomial coincidence counts along a delay scan.

    The whole scan at this shear draws from the Philox stream keyed by
    ``(seed, *stream)``; ``stream`` carries the point index inside a larger
    sweep so each shear can be regenerated independently.
    """
    if pairs_per_point < 1:
        raise ValueError("pairs_per_point must be >= 1")
    taus = np.asarray(tau_grid, dtype=float)
    if taus.size == 0:
        return []
    probs = np.atleast_1d(coincidence_probability(taus, delta_y, spec))
    counts = point_rng(seed, *stream).binomial(pairs_per_point, probs)
    return [
        CoincidenceRecord(float(t), float(delta_y), int(k), int(pairs_per_point), int(seed))
        for t, k in zip(taus, counts)
    ]
