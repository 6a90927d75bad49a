"""Crystal rotations to delay and shear, and the collimation constraint.

All lengths are SI metres, angles radians, times seconds.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

SPEED_OF_LIGHT = 299_792_458.0

#: C1 rotates about the vertical axis; beyond this the Snell correction
#: inside the calcite stops being negligible.
MAX_ALPHA = 0.1
#: C2 rotates about the beam axis, so only the compensating optics limit it.
MAX_GAMMA = 0.25


class SmallAngleViolation(ValueError):
    """A crystal rotation falls outside the supported small-angle range."""


class NoSpatialFringes(ValueError):
    """Zero shear: the two replicas produce no transverse fringe pattern."""


@dataclass(frozen=True)
class InstrumentConfig:
    """Interferometer geometry.

    Defaults are the calcite pair and optics of the reference setup:
    4.18 mm walk-off, 500 mm collimation lens, 2 mm detector aperture and
    100 mm between C1 and the detector.
    """

    walkoff_D: float = 4.18e-3
    focal_f: float = 0.5
    aperture_Phi: float = 2e-3
    detector_distance_d: float = 0.1
    alpha: float = 0.0
    gamma: float = 0.0

    def __post_init__(self):
        for name in ("walkoff_D", "focal_f", "aperture_Phi"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.detector_distance_d >= 0:
            raise ValueError(f"detector_distance_d must be >= 0, got {self.detector_distance_d}")
        check_angles(self.alpha, self.gamma)

    def to_dict(self) -> dict:
        return {
            "walkoff_D_m": self.walkoff_D,
            "focal_f_m": self.focal_f,
            "aperture_Phi_m": self.aperture_Phi,
            "detector_distance_d_m": self.detector_distance_d,
            "alpha_rad": self.alpha,
            "gamma_rad": self.gamma,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "InstrumentConfig":
        keys = {
            "walkoff_D_m": "walkoff_D",
            "focal_f_m": "focal_f",
            "aperture_Phi_m": "aperture_Phi",
            "detector_distance_d_m": "detector_distance_d",
            "alpha_rad": "alpha",
            "gamma_rad": "gamma",
        }
        unknown = set(data) - set(keys)
        if unknown:
            raise KeyError(f"unknown instrument keys: {sorted(unknown)}")
        return cls(**{keys[k]: float(v) for k, v in data.items()})


@dataclass(frozen=True)
class ShearState:
    tau: float
    delta_y: float
    delta_x: float

    def as_dict(self) -> dict:
        return asdict(self)


def check_angles(alpha: float, gamma: float) -> None:
    if not math.isfinite(alpha) or abs(alpha) >= MAX_ALPHA:
        raise SmallAngleViolation(f"|alpha| must be < {MAX_ALPHA} rad, got {alpha}")
    if not math.isfinite(gamma) or abs(gamma) >= MAX_GAMMA:
        raise SmallAngleViolation(f"|gamma| must be < {MAX_GAMMA} rad, got {gamma}")


def alpha_to_delay(config: InstrumentConfig) -> float:
    """Delay ``tau = D tan(alpha) / c`` of the extraordinary arm (signed)."""
    check_angles(config.alpha, config.gamma)
    return config.walkoff_D * math.tan(config.alpha) / SPEED_OF_LIGHT


def delay_to_alpha(tau: float, walkoff_D: float) -> float:
    alpha = math.atan(SPEED_OF_LIGHT * tau / walkoff_D)
    check_angles(alpha, 0.0)
    return alpha


def gamma_to_shear(config: InstrumentConfig) -> ShearState:
    """Vertical and horizontal shear produced by rotating C2 by ``gamma``."""
    check_angles(config.alpha, config.gamma)
    D, g = config.walkoff_D, config.gamma
    # 1 - cos(g) written as 2 sin^2(g/2) to keep precision at tiny angles.
    return ShearState(
        tau=alpha_to_delay(config),
        delta_y=D * math.sin(g),
        delta_x=2.0 * D * math.sin(0.5 * g) ** 2,
    )


def shear_to_gamma(delta_y: float, walkoff_D: float) -> float:
    """Invert ``delta_y = D sin(gamma)``; raises if the shear is unreachable."""
    if abs(delta_y) >= max_shear(walkoff_D):
        raise SmallAngleViolation(
            f"delta_y={delta_y} m needs |gamma| >= {MAX_GAMMA} rad with D={walkoff_D} m"
        )
    return math.asin(delta_y / walkoff_D)


def max_shear(walkoff_D: float) -> float:
    return walkoff_D * math.sin(MAX_GAMMA)


def max_delay(walkoff_D: float) -> float:
    return walkoff_D * math.tan(MAX_ALPHA) / SPEED_OF_LIGHT


def fringe_period(radius_R: float, delta_y: float, wavelength: float, distance_d: float) -> float:
    """Period ``lambda (R + d) / delta_y`` of the straight fringes from a curved wavefront.

    Raises :class:`NoSpatialFringes` for zero shear.
    """
    if delta_y == 0:
        raise NoSpatialFringes("delta_y = 0 gives an infinite fringe period")
    if not (delta_y > 0 and wavelength > 0 and radius_R > 0):
        raise ValueError("delta_y, wavelength and radius_R must be positive")
    return wavelength * (radius_R + distance_d) / delta_y


def min_collimation_radius(
    delta_y_max: float, aperture_Phi: float, wavelength: float, distance_d: float
) -> float:
    """Smallest wavefront radius of curvature keeping fringes wider than the aperture.

    Any ``R`` strictly greater than the returned value satisfies
    ``fringe_period(R, ...) > aperture_Phi``; ``R`` equal to it does not.
    Returns 0 when every curvature is acceptable.
    """
    if not (delta_y_max > 0 and aperture_Phi > 0 and wavelength > 0 and distance_d >= 0):
        raise ValueError("delta_y_max, aperture_Phi and wavelength must be positive, distance_d >= 0")
    r_min = aperture_Phi * delta_y_max / wavelength - distance_d
    return max(r_min, 0.0)


def collimation_ok(
    radius_R: float, delta_y_max: float, aperture_Phi: float, wavelength: float, distance_d: float
) -> bool:
    """True when fringes at the largest shear are strictly wider than the aperture."""
    return fringe_period(radius_R, delta_y_max, wavelength, distance_d) > aperture_Phi
