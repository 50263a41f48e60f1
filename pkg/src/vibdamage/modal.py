"""Generalized eigenproblem and the modal forward map.

A modal observation is the stacked vector
``(omega_1, B v_1, ..., omega_n, B v_n)`` of length ``n * (p + 1)`` with
each observable shape normalized to unit norm and a non-negative reading at
the last (free-end) sensor.
"""
import numpy as np
import scipy.linalg

from .errors import NumericalError, UnobservableModeError
from .fem import damaged_stiffness


def solve_modes(system, d, n, ei_scale=1.0):
    """The ``n`` smallest eigenpairs of K(d) v = omega^2 M v.

    Returns
    -------
    omega : ndarray, shape (n,)
        Angular frequencies in rad/s, ascending.
    shapes : ndarray, shape (2N, n)
        M-orthonormal mode shapes as columns.
    """
    if not 1 <= n <= system.ndof:
        raise ValueError(f"mode count must be in [1, {system.ndof}], got {n}")
    k = ei_scale * damaged_stiffness(system, d)
    # Work with the flexibility form L^-1 M L^-T (K = L L^T): the wanted modes
    # are then its largest eigenvalues, which a dense solver resolves to
    # relative precision. The direct form loses digits on the low modes
    # because its error scales with the stiffest mode.
    try:
        low = scipy.linalg.cholesky(k, lower=True, check_finite=False)
        a = scipy.linalg.solve_triangular(low, system.mass, lower=True, check_finite=False)
        a = scipy.linalg.solve_triangular(low, a.T, lower=True, check_finite=False)
        a = 0.5 * (a + a.T)
        m = system.ndof
        inv, y = scipy.linalg.eigh(a, subset_by_index=[m - n, m - 1], check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(
            f"eigensolver failed (ndof={system.ndof}, n={n}, "
            f"max|d|={np.max(np.abs(d)):.3g}): {exc}"
        ) from exc
    if np.any(inv <= 0):
        raise NumericalError(f"non-positive eigenvalue {inv.min():.3e}")
    lam = 1.0 / inv[::-1]
    shapes = scipy.linalg.solve_triangular(low.T, y[:, ::-1], lower=False, check_finite=False)
    # M-normalize; the flexibility form returns K-orthonormal vectors
    shapes = shapes / np.sqrt(np.einsum("ij,ij->j", shapes, system.mass @ shapes))
    return np.sqrt(lam), shapes


def normalize_observable(shape, system):
    """Unit-norm sensor projection of a mode shape, free-end reading >= 0."""
    obs = system.observation @ np.asarray(shape)
    norm = np.linalg.norm(obs)
    if norm == 0 or not np.isfinite(norm):
        raise UnobservableModeError("mode shape is invisible to the sensors")
    obs = obs / norm
    if obs[-1] < 0:
        obs = -obs
    return obs


def stack_observation(omegas, shapes):
    """Interleave frequencies and sensor shapes: (w1, h1, w2, h2, ...)."""
    omegas = np.asarray(omegas, dtype=float)
    if omegas.size == 0:
        return np.zeros(0)
    shapes = np.asarray(shapes, dtype=float).reshape(omegas.size, -1)
    return np.column_stack([omegas, shapes]).reshape(-1)


def split_observation(vec, n):
    """Inverse of :func:`stack_observation`."""
    blocks = np.asarray(vec, dtype=float).reshape(n, -1)
    return blocks[:, 0].copy(), blocks[:, 1:].copy()


def forward_map(system, d, n=3, ei_scale=1.0):
    """Modal observation vector predicted for damage ``d``."""
    omega, shapes = solve_modes(system, d, n, ei_scale)
    obs = [normalize_observable(shapes[:, i], system) for i in range(n)]
    return stack_observation(omega, obs)


def frequency_index(n, p):
    """Positions of the frequency entries inside a stacked observation."""
    return np.arange(n) * (p + 1)
