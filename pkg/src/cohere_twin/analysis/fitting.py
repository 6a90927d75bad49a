"""Least-squares fits of the Gaussian (SPDC) and circular-source coherence kernels."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..specfun import JINC_FIRST_ZERO, JINC_HALF_POINT, jinc, jinc_derivative
from .lm import levenberg_marquardt
from .visibility import VisibilityPoint

__all__ = [
    "FitResult",
    "FitConvergenceError",
    "DegenerateDataError",
    "InitializationError",
    "gaussian_model",
    "gaussian_jacobian",
    "circ_model",
    "circ_jacobian",
    "circ_wavenumber",
    "fit_gaussian_coherence",
    "fit_circ_coherence",
]

LM_DAMPING = 1e-3
LM_FACTOR = 10.0
LM_MAX_ITER = 200
LM_GTOL = 1e-10
#: Relative uncertainty below which points are fitted with unit weights.
SIGMA_FLOOR = 1e-12


class DegenerateDataError(ValueError):
    pass


class InitializationError(ValueError):
    pass


class FitConvergenceError(RuntimeError):
    """Raised when LM stops without meeting the gradient tolerance.

    ``result`` holds the last iterate as a :class:`FitResult`.
    """

    def __init__(self, message: str, result: "FitResult"):
        super().__init__(message)
        self.result = result


@dataclass
class FitResult:
    model: str
    params: dict
    covariance: np.ndarray
    residual_norm: float
    iterations: int
    converged: bool
    gradient_norm: float
    n_points: int
    meta: dict = field(default_factory=dict)
    provenance: str | None = None

    @property
    def param_names(self) -> list[str]:
        return list(self.params)

    def stderr(self, name: str) -> float:
        i = self.param_names.index(name)
        return math.sqrt(max(float(self.covariance[i, i]), 0.0))

    @property
    def diameter(self) -> float:
        return 2.0 * self.params["radius_r"]

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        if self.model == "gaussian":
            return gaussian_model(x, self.params["V0"], self.params["delta"])
        if self.model == "circ":
            return circ_model(x, self.params["V0"], self.params["radius_r"], self.meta["wavenumber"])
        raise ValueError(f"unknown model {self.model!r}")

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "params": dict(self.params),
            "stderr": {k: self.stderr(k) for k in self.params},
            "covariance": np.asarray(self.covariance).tolist(),
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "gradient_norm": self.gradient_norm,
            "n_points": self.n_points,
            "meta": dict(self.meta),
            "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FitResult":
        return cls(
            model=data["model"],
            params={k: float(v) for k, v in data["params"].items()},
            covariance=np.asarray(data["covariance"], dtype=float),
            residual_norm=float(data["residual_norm"]),
            iterations=int(data["iterations"]),
            converged=bool(data["converged"]),
            gradient_norm=float(data["gradient_norm"]),
            n_points=int(data["n_points"]),
            meta=dict(data.get("meta", {})),
            provenance=data.get("provenance"),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "FitResult":
        return cls.from_dict(json.loads(text))


def gaussian_model(x, v0: float, delta: float):
    x = np.asarray(x, dtype=float)
    return v0 * np.exp(-0.5 * (x / delta) ** 2)


def gaussian_jacobian(x, v0: float, delta: float) -> np.ndarray:
    """Columns ``d/dV0`` and ``d/ddelta``."""
    x = np.asarray(x, dtype=float)
    e = np.exp(-0.5 * (x / delta) ** 2)
    return np.column_stack([e, v0 * e * x**2 / delta**3])


def circ_wavenumber(focal_f: float, wavelength_mode: str = "reduced", lambda0: float | None = None) -> float:
    """Factor ``k`` in the kernel argument ``k * r * x``."""
    if not focal_f > 0:
        raise ValueError("focal_f must be positive")
    if wavelength_mode == "reduced":
        return 2.0 * math.pi / focal_f
    if wavelength_mode == "at_lambda0":
        if lambda0 is None or not lambda0 > 0:
            raise ValueError("at_lambda0 mode needs a positive lambda0")
        return 2.0 * math.pi / (focal_f * lambda0)
    raise ValueError(f"wavelength_mode must be 'reduced' or 'at_lambda0', got {wavelength_mode!r}")


def circ_model(x, v0: float, radius: float, k: float):
    return v0 * jinc(k * radius * np.asarray(x, dtype=float))


def circ_jacobian(x, v0: float, radius: float, k: float) -> np.ndarray:
    """Columns ``d/dV0`` and ``d/dr``."""
    x = np.asarray(x, dtype=float)
    z = k * radius * x
    return np.column_stack([jinc(z), v0 * jinc_derivative(z) * k * x])


def _arrays(points: list[VisibilityPoint]):
    if len(points) < 4:
        raise ValueError(f"need at least 4 visibility points, got {len(points)}")
    x = np.array([abs(p.x) for p in points], dtype=float)
    v = np.array([p.visibility for p in points], dtype=float)
    s = np.array([p.uncertainty for p in points], dtype=float)
    if np.ptp(v) <= 1e-12 * max(float(np.max(np.abs(v))), 1e-300):
        raise DegenerateDataError("all visibilities are equal; the coherence width is unconstrained")
    order = np.argsort(x, kind="stable")
    x, v, s = x[order], v[order], s[order]
    # Uncertainties at rounding level (noiseless data) carry no weighting information.
    informative = np.all(s > SIGMA_FLOOR * float(np.max(np.abs(v))))
    w = 1.0 / s if informative else np.ones_like(v)
    return x, v, w


def _first_crossing(x, v, level):
    """Interpolated x where ``v`` first falls below ``level``, or None."""
    below = np.nonzero(v < level)[0]
    if below.size == 0:
        return None
    i = int(below[0])
    if i == 0:
        return float(x[0])
    x0, x1, y0, y1 = x[i - 1], x[i], v[i - 1], v[i]
    return float(x0 + (level - y0) * (x1 - x0) / (y1 - y0))


def _run_fit(model, x, v, w, p0, names, jac, meta):
    def residuals(p):
        return (model(x, *p) - v) * w

    def jacobian(p):
        return jac(x, *p) * w[:, None]

    lm = levenberg_marquardt(
        residuals, jacobian, p0, damping=LM_DAMPING, factor=LM_FACTOR, max_iter=LM_MAX_ITER, gtol=LM_GTOL
    )
    p = lm.x.copy()
    p[1] = abs(p[1])  # both kernels are even in their width parameter
    J = jac(x, *p) * w[:, None]
    dof = max(x.size - p.size, 1)
    s2 = float(lm.residuals @ lm.residuals) / dof
    cov = s2 * np.linalg.pinv(J.T @ J)
    cov = 0.5 * (cov + cov.T)
    result = FitResult(
        model=meta["model"],
        params=dict(zip(names, (float(q) for q in p))),
        covariance=cov,
        residual_norm=float(np.linalg.norm(lm.residuals)),
        iterations=lm.iterations,
        converged=lm.converged,
        gradient_norm=lm.gradient_norm,
        n_points=int(x.size),
        meta={k: val for k, val in meta.items() if k != "model"},
    )
    if not lm.converged:
        raise FitConvergenceError(f"fit did not converge after {lm.iterations} iterations: {lm.message}", result)
    return result


def fit_gaussian_coherence(points: list[VisibilityPoint], delta_init: float | None = None) -> FitResult:
    """Fit ``V0 exp(-dy^2 / (2 delta^2))`` to visibility versus shear.

    Starts from ``V0`` = largest visibility and ``delta`` from the shear
    where the visibility first halves.
    """
    x, v, w = _arrays(points)
    v0 = float(np.max(v))
    if delta_init is None:
        x_half = _first_crossing(x, v, 0.5 * v[0])
        if x_half is not None and x_half > 0:
            delta_init = x_half / math.sqrt(2.0 * math.log(2.0))
        else:
            ratio = v[-1] / v0
            delta_init = x[-1] / math.sqrt(-2.0 * math.log(ratio)) if 0 < ratio < 1 else x[-1]
    if not delta_init > 0:
        raise InitializationError(f"invalid initial coherence length {delta_init}")
    meta = {"model": "gaussian", "coordinate": "delta_y"}
    return _run_fit(gaussian_model, x, v, w, [v0, delta_init], ["V0", "delta"], gaussian_jacobian, meta)


def _initial_radius(x, v, k):
    vn = v / np.max(v)
    peak = int(np.argmax(vn))
    tail = np.arange(peak, x.size)
    low = tail[vn[tail] < 0.15]
    if low.size:
        start = int(low[0])
        # jinc falls below 0.15 at z ~ 3.2; the first zero is at 3.83 and the
        # second at 7.02, so the first minimum lies within 1.6x of here.
        near = np.nonzero((x >= x[start]) & (x <= 1.6 * x[start]))[0]
        i_zero = int(near[np.argmin(vn[near])])
        if i_zero < x.size - 1 and x[i_zero] > 0:
            return JINC_FIRST_ZERO / (k * x[i_zero])
    x_half = _first_crossing(x, vn, 0.5)
    if x_half is not None and x_half > 0:
        return JINC_HALF_POINT / (k * x_half)
    return JINC_HALF_POINT / (k * x[-1])


def fit_circ_coherence(
    points: list[VisibilityPoint],
    focal_f_fixed: float,
    wavelength_mode: str = "reduced",
    lambda0: float | None = None,
    radius_init: float | None = None,
) -> FitResult:
    """Fit ``V0 jinc(2 pi r x / f [/ lambda0])`` for the source radius with ``f`` fixed.

    ``wavelength_mode="reduced"`` expects points on the reduced axis;
    ``"at_lambda0"`` expects shears in metres and evaluates the kernel at
    ``lambda0``. The radius starts from the first envelope zero when the
    data reach one, otherwise from the half-visibility point.
    """
    k = circ_wavenumber(focal_f_fixed, wavelength_mode, lambda0)
    wanted = "delta_y_reduced" if wavelength_mode == "reduced" else "delta_y"
    if any(p.coordinate != wanted for p in points):
        raise ValueError(f"{wavelength_mode} fits need points on the {wanted} axis")
    x, v, w = _arrays(points)
    positive = x[x > 0]
    if positive.size == 0:
        raise DegenerateDataError("no point with non-zero shear")
    bound = JINC_FIRST_ZERO / (k * float(positive.min()))
    r0 = _initial_radius(x, v, k) if radius_init is None else radius_init
    if not 0 < r0 < 10.0 * bound:
        raise InitializationError(f"initial radius {r0} outside (0, {10.0 * bound})")
    meta = {
        "model": "circ",
        "coordinate": wanted,
        "focal_f": focal_f_fixed,
        "wavelength_mode": wavelength_mode,
        "lambda0": lambda0,
        "wavenumber": k,
    }

    def model(xx, v0, r):
        return circ_model(xx, v0, r, k)

    def jac(xx, v0, r):
        return circ_jacobian(xx, v0, r, k)

    return _run_fit(model, x, v, w, [float(np.max(v)), r0], ["V0", "radius_r"], jac, meta)
