"""A small Levenberg-Marquardt solver with optional projection.

Used by the modal fit and by the MAP damage estimate. The damping factor is
adapted from the gain ratio (Nielsen's rule) and, when a projection is
given, every trial point is projected onto the feasible set before it is
evaluated.
"""
from dataclasses import dataclass

import numpy as np


@dataclass
class LMResult:
    x: np.ndarray
    cost: float
    iterations: int
    converged: bool
    reason: str
    residual: np.ndarray
    jacobian: np.ndarray
    history: list


def forward_difference_jacobian(fun, x, f0, step, lower=None, upper=None):
    """One-sided differences; steps flip inward when they would cross a bound."""
    x = np.asarray(x, dtype=float)
    jac = np.empty((f0.size, x.size))
    for i in range(x.size):
        h = step[i] if np.ndim(step) else step
        if upper is not None and x[i] + h > upper[i]:
            h = -h
        if lower is not None and x[i] + h < lower[i]:
            h = abs(h)
        xp = x.copy()
        xp[i] += h
        jac[:, i] = (fun(xp) - f0) / h
    return jac


def levenberg_marquardt(
    fun,
    x0,
    jac,
    project=None,
    max_iter=200,
    gtol=1e-8,
    xtol=1e-10,
    ftol=0.0,
    tau=1e-3,
    scaling=True,
    projected_gradient=None,
    bounds=None,
):
    """Minimize ``0.5 * ||fun(x)||^2``.

    Parameters
    ----------
    fun : callable
        Residual vector as a function of ``x``.
    jac : callable
        ``jac(x, r)`` returns the Jacobian at ``x`` given ``r = fun(x)``.
    project : callable, optional
        Maps a trial point onto the feasible set.
    projected_gradient : callable, optional
        ``projected_gradient(x, g)`` used for the gradient stopping test;
        defaults to ``g`` itself.
    ftol : float
        Stop when an accepted step changes the cost by less than this
        fraction.
    bounds : tuple of arrays, optional
        ``(lower, upper)``. Variables sitting on a bound with the gradient
        pointing outward are held fixed when the step is solved, so they do
        not shrink the step of the free variables through the projection.
    """
    x = np.asarray(x0, dtype=float).copy()
    if project is not None:
        x = project(x)
    r = fun(x)
    cost = float(r @ r)
    J = jac(x, r)
    A = J.T @ J
    g = J.T @ r
    diag = np.diag(A).copy() if scaling else np.ones(x.size)
    # Marquardt scaling makes the damping factor dimensionless
    mu = tau if scaling else tau * max(np.max(np.diag(A)), 1e-300)
    nu = 2.0
    history = [cost]
    reason = "max_iter"
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        pg = g if projected_gradient is None else projected_gradient(x, g)
        if np.max(np.abs(pg), initial=0.0) < gtol:
            reason, converged = "gtol", True
            it -= 1
            break
        if scaling:
            diag = np.maximum(diag, np.diag(A))
            damp = np.maximum(diag, 1e-12 * max(diag.max(), 1e-300))
        else:
            damp = diag
        free = np.ones(x.size, bool)
        if bounds is not None:
            lo, hi = bounds
            free = ~(((x <= lo) & (g > 0)) | ((x >= hi) & (g < 0)))
        step = np.zeros(x.size)
        try:
            sub = np.ix_(free, free)
            step[free] = np.linalg.solve(A[sub] + mu * np.diag(damp[free]), -g[free])
        except np.linalg.LinAlgError:
            mu *= nu
            nu *= 2
            continue
        trial = x + step
        if project is not None:
            trial = project(trial)
        dx = trial - x
        if np.linalg.norm(dx) <= xtol * (np.linalg.norm(x) + xtol):
            reason, converged = "xtol", True
            break
        r_new = fun(trial)
        cost_new = float(r_new @ r_new)
        lin = r + J @ dx
        predicted = cost - float(lin @ lin)
        actual = cost - cost_new
        rho = actual / predicted if predicted > 0 else -1.0
        if np.isfinite(cost_new) and actual > 0 and rho > 0:
            x, r = trial, r_new
            rel = actual / max(cost, 1e-300)
            cost = cost_new
            history.append(cost)
            if rel < ftol and rho > 0.25:
                reason, converged = "ftol", True
                J = jac(x, r)
                break
            J = jac(x, r)
            A = J.T @ J
            g = J.T @ r
            mu *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
            nu = 2.0
        else:
            mu *= nu
            nu *= 2.0
            if not np.isfinite(mu) or mu > 1e300:
                reason, converged = "stalled", True
                break
    return LMResult(x, cost, it, converged, reason, r, J, history)
