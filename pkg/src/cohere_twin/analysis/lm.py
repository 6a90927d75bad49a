"""Levenberg-Marquardt for small, dense least-squares problems."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: Predicted relative cost reduction treated as zero (a few hundred ulps).
ROUNDING_FLOOR = 256 * np.finfo(float).eps


@dataclass
class LMResult:
    x: np.ndarray
    residuals: np.ndarray
    jacobian: np.ndarray
    iterations: int
    converged: bool
    gradient_norm: float
    message: str

    @property
    def cost(self) -> float:
        return 0.5 * float(self.residuals @ self.residuals)


def _gradient_small(jac_q, r, gtol):
    g = jac_q.T @ r
    g_inf = float(np.max(np.abs(g))) if g.size else 0.0
    rnorm = float(np.linalg.norm(r))
    if g_inf <= gtol or rnorm == 0.0:
        return True, g, g_inf
    # scale-free test: cosine between the residual and each Jacobian column
    cols = np.linalg.norm(jac_q, axis=0)
    cols[cols == 0] = 1.0
    cosine = float(np.max(np.abs(g) / (cols * rnorm)))
    return cosine <= gtol, g, g_inf


def _at_rounding_floor(A, g, cost) -> bool:
    """True when even the undamped step cannot lower the cost measurably."""
    try:
        step = np.linalg.lstsq(A, -g, rcond=None)[0]
    except np.linalg.LinAlgError:
        return False
    predicted = -float(g @ step) - 0.5 * float(step @ A @ step)
    return predicted <= ROUNDING_FLOOR * max(cost, np.finfo(float).tiny)


def levenberg_marquardt(
    fun,
    jac,
    p0,
    scale=None,
    damping: float = 1e-3,
    factor: float = 10.0,
    max_iter: int = 200,
    gtol: float = 1e-10,
) -> LMResult:
    """Minimise ``0.5 * |fun(p)|**2``.

    Iterates on ``q = p / scale`` so parameters of very different magnitude
    (metres next to dimensionless scales) are conditioned alike. The damping
    term is Marquardt's ``lambda * diag(J^T J)``.

    Convergence means the gradient in scaled coordinates has infinity norm
    at most ``gtol``, or its largest cosine with the residual vector is at
    most ``gtol`` (the MINPACK measure), or no step lowers the cost while
    the predicted Gauss-Newton reduction is below floating-point rounding.
    """
    p = np.asarray(p0, dtype=float).copy()
    scale = np.abs(p) if scale is None else np.asarray(scale, dtype=float)
    scale = np.where(scale > 0, scale, 1.0)
    r = np.asarray(fun(p), dtype=float)
    if not np.all(np.isfinite(r)):
        raise ValueError("residuals are not finite at the initial point")
    J = np.asarray(jac(p), dtype=float) * scale
    cost = 0.5 * float(r @ r)
    lam = damping
    message = "maximum iterations reached"

    for it in range(1, max_iter + 1):
        done, g, g_inf = _gradient_small(J, r, gtol)
        if done:
            return LMResult(p, r, J / scale, it - 1, True, g_inf, "gradient tolerance met")
        A = J.T @ J
        diag = np.diag(A).copy()
        diag[diag == 0] = 1.0
        improved = False
        while lam < 1e20:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= factor
                continue
            p_new = p + step * scale
            r_new = np.asarray(fun(p_new), dtype=float)
            cost_new = 0.5 * float(r_new @ r_new) if np.all(np.isfinite(r_new)) else np.inf
            if cost_new < cost:
                lam = max(lam / factor, 1e-15)
                improved = True
                break
            lam *= factor
        if not improved:
            if _at_rounding_floor(A, g, cost):
                return LMResult(p, r, J / scale, it, True, g_inf, "cost reduction below rounding")
            message = "no further decrease possible"
            break
        tiny_step = np.linalg.norm(step) <= 1e-15 * (np.linalg.norm(p / scale) + 1e-15)
        p, r, cost = p_new, r_new, cost_new
        J = np.asarray(jac(p), dtype=float) * scale
        if tiny_step:
            message = "step below machine precision"
            break
    done, g, g_inf = _gradient_small(J, r, gtol)
    if done:
        message = "gradient tolerance met"
    elif message != "maximum iterations reached" and _at_rounding_floor(J.T @ J, g, 0.5 * float(r @ r)):
        done, message = True, "cost reduction below rounding"
    return LMResult(p, r, J / scale, it, done, g_inf, message)
