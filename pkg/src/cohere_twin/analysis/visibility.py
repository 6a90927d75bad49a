"""Fringe-visibility extraction from interferograms and spectra."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from ..geometry import SPEED_OF_LIGHT
from ..thermal import SpectrumTrace, ThermalSourceSpec, reduced_spectrum

__all__ = [
    "EstimatorFailure",
    "InsufficientFringes",
    "AggregationConsistencyError",
    "VisibilityAboveUnity",
    "VisibilityPoint",
    "InterferogramVisibility",
    "SpectralVisibility",
    "visibility_from_interferogram",
    "visibility_from_spectrum",
    "aggregate_reduced",
    "local_envelope",
]

DEFAULT_SPECTRAL_HALF_WINDOW = 40e-9


class EstimatorFailure(RuntimeError):
    """The sinusoid fit was degenerate (rank deficient or non-positive mean)."""


class InsufficientFringes(EstimatorFailure):
    pass


class AggregationConsistencyError(ValueError):
    pass


class VisibilityAboveUnity(UserWarning):
    pass


@dataclass(frozen=True)
class VisibilityPoint:
    """Visibility at one shear.

    ``coordinate`` is ``"delta_y"`` (metres) or ``"delta_y_reduced"``
    (shear over wavelength, dimensionless).
    """

    x: float
    visibility: float
    uncertainty: float = 0.0
    coordinate: str = "delta_y"

    def __post_init__(self):
        if self.coordinate not in ("delta_y", "delta_y_reduced"):
            raise ValueError(f"unknown coordinate {self.coordinate!r}")
        if not self.uncertainty >= 0:
            raise ValueError("uncertainty must be >= 0")
        if self.above_unity:
            warnings.warn(
                f"visibility {self.visibility:.6g} exceeds 1 + 3 sigma at x={self.x:.6g}",
                VisibilityAboveUnity,
                stacklevel=3,
            )

    @property
    def above_unity(self) -> bool:
        return self.visibility > 1.0 + 3.0 * self.uncertainty + 1e-9


class InterferogramVisibility(NamedTuple):
    visibility: float
    phase: float
    uncertainty: float


class SpectralVisibility(NamedTuple):
    visibility: float
    uncertainty: float
    phase: float


def _lstsq(X: np.ndarray, y: np.ndarray):
    coef, _, rank, _ = np.linalg.lstsq(X, y, rcond=None)
    if rank < X.shape[1]:
        raise EstimatorFailure("rank-deficient sinusoid fit")
    resid = y - X @ coef
    n, p = X.shape
    # HC1 sandwich: counting noise is largest between fringe extremes, so the
    # constant-variance formula overstates the amplitude error.
    bread = np.linalg.inv(X.T @ X)
    meat = (X * (resid**2)[:, None]).T @ X
    cov = bread @ meat @ bread * (n / max(n - p, 1))
    return coef, 0.5 * (cov + cov.T)


def _ratio_visibility(a, b, c, grad_a, grad_b, grad_c, cov):
    """``sqrt(b^2 + c^2) / a`` with delta-method standard error."""
    if not a > 0:
        raise EstimatorFailure(f"non-positive fringe mean {a}")
    amp = math.hypot(b, c)
    vis = amp / a
    if amp > 0:
        g = -vis / a * grad_a + (b / (amp * a)) * grad_b + (c / (amp * a)) * grad_c
        var = float(g @ cov @ g)
    else:
        # magnitude undefined in direction; use the mean quadrature variance
        var = 0.5 * float(grad_b @ cov @ grad_b + grad_c @ cov @ grad_c) / a**2
    return vis, math.atan2(-c, b), math.sqrt(max(var, 0.0))


def _single_sinusoid(phase: np.ndarray, y: np.ndarray):
    X = np.column_stack([np.ones_like(phase), np.cos(phase), np.sin(phase)])
    coef, cov = _lstsq(X, y)
    e = np.eye(3)
    return _ratio_visibility(coef[0], coef[1], coef[2], e[0], e[1], e[2], cov)


def _coarse_peak(tau, y, omega0, period):
    """Centre of the one-period window with the largest significant fringe amplitude."""
    best, best_tau = -1.0, None
    scan_mid = 0.5 * (tau[0] + tau[-1])
    for centre in np.arange(tau[0] + 0.5 * period, tau[-1] - 0.5 * period + 1e-30, 0.25 * period):
        sel = np.abs(tau - centre) <= 0.5 * period
        if np.count_nonzero(sel) < 4:
            continue
        try:
            v, _, s = _single_sinusoid(omega0 * tau[sel], y[sel])
        except EstimatorFailure:
            continue
        if v > best:
            best, best_tau, best_s = v, centre, s
    if best_tau is None or best <= 5.0 * best_s:
        return scan_mid
    return best_tau


def visibility_from_interferogram(
    tau,
    signal,
    omega0: float,
    envelope_degree: int = 0,
    window_periods: float | None = None,
) -> InterferogramVisibility:
    """Fit ``a + b cos(omega0 tau + phi)`` and return ``(b / a, phi, sigma)``.

    ``signal`` may be an intensity or a count rate; only ratios matter.

    With ``envelope_degree = 0`` and no window the whole scan is fitted with
    a constant envelope, which is exact for a monochromatic carrier. For
    short-coherence light set ``envelope_degree > 0``: the fringe amplitude
    is then a polynomial in delay over ``window_periods`` periods (default 3)
    centred on the strongest fringes, and the returned visibility is its
    maximum over the central period.
    """
    tau = np.asarray(tau, dtype=float)
    y = np.asarray(signal, dtype=float)
    if tau.shape != y.shape or tau.ndim != 1:
        raise ValueError("tau and signal must be equal-length 1-D arrays")
    order = np.argsort(tau)
    tau, y = tau[order], y[order]
    period = 2.0 * math.pi / omega0
    span = tau[-1] - tau[0] if tau.size else 0.0
    if tau.size < 3 or span < 2.0 * period:
        raise ValueError("interferogram must span at least two fringe periods")
    if np.median(np.diff(tau)) > period / 3.0:
        raise ValueError("need at least three samples per fringe period")

    if envelope_degree == 0 and window_periods is None:
        return InterferogramVisibility(*_single_sinusoid(omega0 * tau, y))

    width = (window_periods or 3.0) * period
    centre = _coarse_peak(tau, y, omega0, period)
    centre = min(max(centre, tau[0] + 0.5 * width), tau[-1] - 0.5 * width)
    sel = np.abs(tau - centre) <= 0.5 * width + 1e-9 * period
    t, yy = tau[sel], y[sel]
    u = (t - centre) / (0.5 * width)
    powers = np.column_stack([u**k for k in range(envelope_degree + 1)])
    X = np.column_stack(
        [np.ones_like(t), powers * np.cos(omega0 * t)[:, None], powers * np.sin(omega0 * t)[:, None]]
    )
    coef, cov = _lstsq(X, yy)
    nb = envelope_degree + 1
    cb, cc = coef[1 : 1 + nb], coef[1 + nb :]

    fine = np.linspace(-0.5 * period / (0.5 * width), 0.5 * period / (0.5 * width), 201)
    basis = np.column_stack([fine**k for k in range(nb)])
    amps = np.hypot(basis @ cb, basis @ cc)
    best = basis[int(np.argmax(amps))]
    p = coef.size
    grad_a = np.zeros(p)
    grad_a[0] = 1.0
    grad_b = np.zeros(p)
    grad_b[1 : 1 + nb] = best
    grad_c = np.zeros(p)
    grad_c[1 + nb :] = best
    vis, phase, sigma = _ratio_visibility(coef[0], best @ cb, best @ cc, grad_a, grad_b, grad_c, cov)
    return InterferogramVisibility(vis, phase, sigma)


def visibility_from_spectrum(
    trace: SpectrumTrace,
    baseline,
    tau_known: float,
    half_window: float = DEFAULT_SPECTRAL_HALF_WINDOW,
    center: float | None = None,
) -> SpectralVisibility:
    """Demodulate a fringed spectrum around its centre wavelength.

    The spectrum is divided by the baseline and ``a [1 + V cos(2 pi c tau /
    lambda + phi0)]`` is fitted by linear least squares over
    ``center +/- half_window``.
    """
    lam_c = baseline.center_wavelength if center is None else center
    sel = np.abs(trace.wavelength_grid - lam_c) <= half_window
    lam = trace.wavelength_grid[sel]
    if lam.size < 3:
        raise InsufficientFringes("analysis window holds fewer than 3 samples")
    s0 = baseline.density_lambda(lam)
    if np.any(s0 <= 0):
        raise ValueError("baseline vanishes inside the analysis window")
    phase = 2.0 * math.pi * SPEED_OF_LIGHT * tau_known / lam
    fringes = abs(phase[0] - phase[-1]) / (2.0 * math.pi)
    if fringes < 3.0:
        raise InsufficientFringes(f"only {fringes:.2f} fringes inside the analysis window")
    vis, phi0, sigma = _single_sinusoid(phase, trace.intensity[sel] / s0)
    return SpectralVisibility(vis, sigma, phi0)


def local_envelope(x: np.ndarray, y: np.ndarray, period: float, step_fraction: float = 0.5):
    """Fringe envelope of ``y = 1 + m(x) cos(2 pi x / period)`` in one-period windows.

    Each window fits in-phase and quadrature amplitudes of ``y - 1`` that
    vary linearly across the window and reports their magnitude at the
    window centre. A constant-amplitude fit would instead report ``m`` at
    the cos^2-weighted centroid, which is offset from the centre by up to
    ``period / (4 pi)`` with the same sign in every window.

    Returns window centres, envelope values and standard errors.
    """
    centres, env, err = [], [], []
    first, last = x[0] + 0.5 * period, x[-1] - 0.5 * period
    if last < first:
        return np.array([]), np.array([]), np.array([])
    n_win = int(math.floor((last - first) / (step_fraction * period) + 1e-9)) + 1
    for c in first + step_fraction * period * np.arange(n_win):
        sel = np.abs(x - c) <= 0.5 * period
        if np.count_nonzero(sel) < 5:
            continue
        ph = 2.0 * math.pi * x[sel] / period
        u = (x[sel] - c) / period
        cos, sin = np.cos(ph), np.sin(ph)
        X = np.column_stack([cos, sin, u * cos, u * sin])
        coef, cov = _lstsq(X, y[sel] - 1.0)
        amp = math.hypot(coef[0], coef[1])
        if amp > 0:
            g = coef[:2] / amp
            var = float(g @ cov[:2, :2] @ g)
        else:
            var = 0.5 * float(np.trace(cov[:2, :2]))
        centres.append(float(c))
        env.append(amp)
        err.append(math.sqrt(max(var, 0.0)))
    return np.array(centres), np.array(env), np.array(err)


def aggregate_reduced(
    traces: list[SpectrumTrace],
    spec: ThermalSourceSpec,
    step_fraction: float = 0.5,
    max_jump: float = 0.1,
) -> list[VisibilityPoint]:
    """Reduced-coordinate envelope from spectra taken at several shears.

    Every trace is mapped to ``(dy / lambda, S / S0)`` and demodulated in
    sliding windows one local fringe period long. Where two traces cover the
    same reduced range their envelopes must agree on average to within
    ``max_jump``.
    """
    if not traces:
        return []
    per_trace = []
    for trace in traces:
        rs = reduced_spectrum(trace, spec)
        if rs.tau == 0:
            raise InsufficientFringes("zero delay: no spectral fringes to demodulate")
        per_trace.append(local_envelope(rs.delta_y_reduced, rs.normalized, rs.fringe_period, step_fraction))

    for i, (xi, ei, _) in enumerate(per_trace):
        for xj, ej, _ in per_trace[i + 1 :]:
            if xi.size < 2 or xj.size < 2:
                continue
            lo, hi = max(xi[0], xj[0]), min(xi[-1], xj[-1])
            inside = (xi >= lo) & (xi <= hi)
            if hi <= lo or not np.any(inside):
                continue
            jump = float(np.mean(ei[inside] - np.interp(xi[inside], xj, ej)))
            if abs(jump) > max_jump:
                raise AggregationConsistencyError(
                    f"overlapping traces disagree by {jump:.3f} in mean envelope near x={lo:.4g}"
                )

    x = np.concatenate([p[0] for p in per_trace])
    e = np.concatenate([p[1] for p in per_trace])
    s = np.concatenate([p[2] for p in per_trace])
    order = np.argsort(x, kind="stable")
    return [VisibilityPoint(float(x[k]), float(e[k]), float(s[k]), "delta_y_reduced") for k in order]
