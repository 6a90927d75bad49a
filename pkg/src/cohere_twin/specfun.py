"""Bessel J1 and the circular-aperture coherence kernel.

Only the pieces the coherence models need are provided: J0/J1/J2 of real
argument, ``jinc(z) = 2|J1(z)/z|`` and its derivative.

Small arguments use the ascending power series. Moderate arguments use
Miller's backward recurrence normalised with ``J0 + 2*sum(J_2k) = 1``, which
keeps the absolute error at a few ulp for any ``|z|`` up to ``_HANKEL_MIN``.
Beyond that the Hankel asymptotic expansion is used.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import factorial

import numpy as np

__all__ = [
    "SeriesAccuracy",
    "bessel_j0",
    "bessel_j1",
    "bessel_j2",
    "jinc",
    "jinc_derivative",
    "JINC_FIRST_ZERO",
    "JINC_HALF_POINT",
]

#: First positive zero of J1, i.e. of the jinc kernel.
JINC_FIRST_ZERO = 3.8317059702075125
#: ``jinc(z) = 1/2`` on the first lobe.
JINC_HALF_POINT = 2.215089367724233

_SERIES_MAX = 4.0
_HANKEL_MIN = 2.0e4
_RESCALE = 1e250
_TAYLOR_MAX = 1e-3


@dataclass(frozen=True)
class SeriesAccuracy:
    """Truncation control for the ascending series."""

    abs_tol: float = 1e-17
    max_terms: int = 60

    def __post_init__(self):
        if not 0 < self.abs_tol <= 1e-6:
            raise ValueError(f"abs_tol must lie in (0, 1e-6], got {self.abs_tol}")
        if self.max_terms < 50:
            raise ValueError(f"max_terms must be >= 50, got {self.max_terms}")


_DEFAULT_ACCURACY = SeriesAccuracy()


def _as_finite(z) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if not np.all(np.isfinite(z)):
        raise ValueError("Bessel functions require finite arguments")
    return z


def _series(order: int, z: np.ndarray, acc: SeriesAccuracy) -> np.ndarray:
    half = 0.5 * z
    term = half**order / factorial(order)
    total = term.copy()
    q = -half * half
    for k in range(1, acc.max_terms):
        term = term * q / (k * (k + order))
        total += term
        if np.all(np.abs(term) <= acc.abs_tol):
            break
    return total


def _miller(z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """J0, J1, J2 for ``z > 0`` via normalised backward recurrence."""
    zmax = float(z.max())
    start = int(zmax + 30 + 12 * zmax ** (1 / 3))
    start += start % 2
    b_next = np.zeros_like(z)
    b = np.full_like(z, 1e-300)
    norm = np.zeros_like(z)
    j0 = np.zeros_like(z)
    j1 = np.zeros_like(z)
    j2 = np.zeros_like(z)
    two_over_z = 2.0 / z
    # b holds the unnormalised J_n; runs n = start .. 1, producing J_{n-1}.
    for n in range(start, 0, -1):
        b_prev = n * two_over_z * b - b_next
        b_next, b = b, b_prev
        m = n - 1
        if m % 2 == 0 and m > 0:
            norm += 2.0 * b
        if m == 2:
            j2 = b.copy()
        elif m == 1:
            j1 = b.copy()
        elif m == 0:
            j0 = b.copy()
        big = np.abs(b) > _RESCALE
        if np.any(big):
            s = np.where(big, 1.0 / _RESCALE, 1.0)
            b *= s
            b_next *= s
            norm *= s
            j0 *= s
            j1 *= s
            j2 *= s
    norm += j0
    return j0 / norm, j1 / norm, j2 / norm


def _hankel(order: int, z: np.ndarray) -> np.ndarray:
    mu = 4.0 * order * order
    p = np.ones_like(z)
    q = np.zeros_like(z)
    term = np.ones_like(z)
    inv8z = 1.0 / (8.0 * z)
    for k in range(1, 30):
        term = term * (mu - (2 * k - 1) ** 2) * inv8z / k
        if k % 2:
            q += term * (1 if (k // 2) % 2 == 0 else -1)
        else:
            p += term * (1 if (k // 2) % 2 == 0 else -1)
    chi = z - (0.5 * order + 0.25) * np.pi
    return np.sqrt(2.0 / (np.pi * z)) * (p * np.cos(chi) - q * np.sin(chi))


def _j012(z, acc: SeriesAccuracy = _DEFAULT_ACCURACY):
    """J0, J1, J2 evaluated elementwise on an array."""
    z = _as_finite(z)
    shape = z.shape
    x = np.abs(z).ravel()
    j0 = np.empty_like(x)
    j1 = np.empty_like(x)
    j2 = np.empty_like(x)

    small = x <= _SERIES_MAX
    if np.any(small):
        xs = x[small]
        j0[small] = _series(0, xs, acc)
        j1[small] = _series(1, xs, acc)
        j2[small] = _series(2, xs, acc)

    huge = x >= _HANKEL_MIN
    if np.any(huge):
        xh = x[huge]
        j0[huge] = _hankel(0, xh)
        j1[huge] = _hankel(1, xh)
        j2[huge] = _hankel(2, xh)

    mid = ~(small | huge)
    if np.any(mid):
        a, b, c = _miller(x[mid])
        j0[mid], j1[mid], j2[mid] = a, b, c

    # J1 is odd, J0 and J2 even.
    j1 = np.where(z.ravel() < 0, -j1, j1)
    return j0.reshape(shape), j1.reshape(shape), j2.reshape(shape)


def _unwrap(result: np.ndarray, like):
    return float(result) if np.ndim(like) == 0 else result


def bessel_j0(z):
    """Bessel function of the first kind, order 0."""
    return _unwrap(_j012(z)[0], z)


def bessel_j1(z, accuracy: SeriesAccuracy = _DEFAULT_ACCURACY):
    """Bessel function of the first kind, order 1.

    Parameters
    ----------
    z : float or array_like
        Finite real argument.

    Raises
    ------
    ValueError
        If any element of ``z`` is not finite.
    """
    return _unwrap(_j012(z, accuracy)[1], z)


def bessel_j2(z):
    """Bessel function of the first kind, order 2."""
    return _unwrap(_j012(z)[2], z)


def _signed_jinc(z: np.ndarray, j1: np.ndarray) -> np.ndarray:
    tiny = np.abs(z) < _TAYLOR_MAX
    safe = np.where(tiny, 1.0, z)
    z2 = z * z
    taylor = 1.0 - z2 / 8.0 + z2 * z2 / 192.0 - z2 * z2 * z2 / 9216.0
    return np.where(tiny, taylor, 2.0 * j1 / safe)


def jinc(z):
    """Circular-source coherence kernel ``2|J1(z)/z|``, equal to 1 at ``z = 0``."""
    arr = _as_finite(z)
    _, j1, _ = _j012(arr)
    return _unwrap(np.abs(_signed_jinc(arr, j1)), z)


def jinc_derivative(z):
    """Derivative of :func:`jinc` with respect to ``z``.

    Uses ``d/dz [2 J1(z)/z] = -2 J2(z)/z`` times the sign of ``2 J1(z)/z``.
    The kernel has a kink at each zero of J1; there the one-sided value for
    a positive signed kernel is returned.
    """
    arr = _as_finite(z)
    _, j1, j2 = _j012(arr)
    tiny = np.abs(arr) < _TAYLOR_MAX
    safe = np.where(tiny, 1.0, arr)
    z2 = arr * arr
    taylor = -arr / 4.0 + arr * z2 / 48.0 - arr * z2 * z2 / 1536.0
    signed_deriv = np.where(tiny, taylor, -2.0 * j2 / safe)
    sign = np.where(_signed_jinc(arr, j1) < 0, -1.0, 1.0)
    return _unwrap(sign * signed_deriv, z)
