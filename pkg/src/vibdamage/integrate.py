"""Implicit midpoint time stepping of the damped, damaged beam."""
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import NumericalError
from .fem import damaged_stiffness


@dataclass(frozen=True)
class TimeGrid:
    dt: float
    steps: int
    t0: float = 0.0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.steps < 0 or int(self.steps) != self.steps:
            raise ValueError("steps must be a non-negative integer")

    def times(self):
        return self.t0 + self.dt * np.arange(self.steps + 1)


@dataclass(frozen=True)
class BeamState:
    velocity: np.ndarray
    displacement: np.ndarray

    @classmethod
    def zeros(cls, ndof):
        return cls(np.zeros(ndof), np.zeros(ndof))


@dataclass(frozen=True)
class Trajectory:
    """Velocities and displacements, one row per time level."""

    velocity: np.ndarray
    displacement: np.ndarray

    def __len__(self):
        return self.displacement.shape[0]

    def __getitem__(self, k):
        return BeamState(self.velocity[k], self.displacement[k])


class MidpointPropagator:
    """Pre-factorized implicit midpoint map for fixed coefficients.

    Eliminating the displacement from the block system leaves one SPD
    solve per step for the velocity increment::

        (M + dt/2 C + dt^2/4 K) dv = -dt (alpha M v0 + K (u0 + (beta + dt/2) v0))
        v1 = v0 + dv,   u1 = u0 + dt (v0 + dv / 2)

    with C = alpha M + beta K. ``force`` may supply a better-conditioned
    evaluation of ``K x`` than the dense product (see :func:`internal_force`).
    """

    def __init__(self, mass, stiffness, alpha, beta, dt, force=None):
        self.mass = mass
        self.stiffness = stiffness
        self.dt = dt
        self.alpha = alpha
        self.beta = beta
        self._force = force if force is not None else (lambda x: stiffness @ x)
        damping = alpha * mass + beta * stiffness
        lhs = mass + 0.5 * dt * damping + 0.25 * dt * dt * stiffness
        try:
            self._factor = ("chol", scipy.linalg.cho_factor(lhs))
        except np.linalg.LinAlgError:
            try:
                self._factor = ("lu", scipy.linalg.lu_factor(lhs, check_finite=True))
            except (ValueError, np.linalg.LinAlgError) as exc:
                raise NumericalError(f"midpoint system is singular: {exc}") from exc

    def _solve(self, b):
        kind, f = self._factor
        if kind == "chol":
            return scipy.linalg.cho_solve(f, b, check_finite=False)
        return scipy.linalg.lu_solve(f, b, check_finite=False)

    def step(self, velocity, displacement):
        dt = self.dt
        load = self._force(displacement + (self.beta + 0.5 * dt) * velocity)
        if self.alpha:
            load = load + self.alpha * (self.mass @ velocity)
        dv = self._solve(-dt * load)
        return velocity + dv, displacement + dt * (velocity + 0.5 * dv)

    def transition_matrix(self):
        """Matrix G with [v1; u1] = G [v0; u0]."""
        n = self.mass.shape[0]
        dt = self.dt
        k = self.stiffness
        load = np.hstack([self.alpha * self.mass + (self.beta + 0.5 * dt) * k, k])
        gdv = self._solve(-dt * load)
        eye = np.eye(n)
        gv = gdv.copy()
        gv[:, :n] += eye
        gu = 0.5 * dt * gdv
        gu[:, :n] += dt * eye
        gu[:, n:] += eye
        return np.vstack([gv, gu])


def propagator(system, d, ei_scale, alpha, beta, dt):
    if not ei_scale > 0:
        raise ValueError("ei_scale must be positive")
    k = ei_scale * damaged_stiffness(system, d)
    scale = ei_scale * (1.0 - np.asarray(d, dtype=float))
    return MidpointPropagator(system.mass, k, alpha, beta, dt,
                              force=lambda x: internal_force(system, x, scale))


def midpoint_step(state, system, d, ei_scale, alpha, beta, dt):
    """Advance ``state`` by one implicit midpoint step."""
    v1, u1 = propagator(system, d, ei_scale, alpha, beta, dt).step(
        state.velocity, state.displacement
    )
    return BeamState(v1, u1)


def simulate_trajectory(init, system, d, ei_scale, alpha, beta, grid):
    """Apply the midpoint map ``grid.steps`` times; row 0 is ``init``."""
    prop = propagator(system, d, ei_scale, alpha, beta, grid.dt)
    n = system.ndof
    vel = np.empty((grid.steps + 1, n))
    disp = np.empty((grid.steps + 1, n))
    vel[0], disp[0] = init.velocity, init.displacement
    for k in range(grid.steps):
        vel[k + 1], disp[k + 1] = prop.step(vel[k], disp[k])
    if not np.all(np.isfinite(disp[-1])):
        raise NumericalError("trajectory became non-finite")
    return Trajectory(vel, disp)


def observe(state, system):
    """Sensor readings B u for a state (or a stack of displacement rows)."""
    disp = state.displacement if isinstance(state, (BeamState, Trajectory)) else state
    return np.asarray(disp) @ system.observation.T


def energy(state, mass, stiffness):
    v, u = state.velocity, state.displacement
    return 0.5 * v @ mass @ v + 0.5 * u @ stiffness @ u


_GAUSS2 = 0.5 + np.array([-0.5, 0.5]) / np.sqrt(3.0)


def strain_energy(system, displacement, d=None, ei_scale=1.0):
    """``u^T K(d) u / 2`` evaluated from element curvatures.

    Forming ``K u`` for a smooth ``u`` cancels terms of size ``|K| |u|``,
    which limits the plain quadratic form to about 1e-9 relative accuracy
    on fine meshes. Here nodal differences are taken first and the
    (linear) curvature is integrated exactly with two Gauss points.
    """
    u = np.append(np.asarray(displacement, dtype=float), 0.0)  # index -1 -> clamped zero
    e = u[system.element_dofs]
    w1, t1, w2, t2 = e.T
    h = system.config.h
    a = (w2 - w1) - h * t1
    b = h * (t2 - t1)
    kappa = np.array([(6 - 12 * t) * a + (6 * t - 2) * b for t in _GAUSS2]) / h**2
    per_element = 0.25 * h * np.sum(kappa**2, axis=0)
    scale = np.ones(system.n_elements) if d is None else 1.0 - np.asarray(d)
    return ei_scale * system.config.ei * float(scale @ per_element)


def internal_force(system, displacement, scale=None):
    """``K u`` assembled from element curvatures (``scale`` weights elements).

    Equal to the dense product in exact arithmetic, but the error is
    relative to ``|K u|`` rather than ``|K| |u|``, which keeps the undamped
    midpoint map energy-conserving to ~1e-12 on a 100-element mesh.
    """
    u = np.append(np.asarray(displacement, dtype=float), 0.0)
    w1, t1, w2, t2 = u[system.element_dofs].T
    h = system.config.h
    a = (w2 - w1) - h * t1
    b = h * (t2 - t1)
    weight = np.ones(system.n_elements) if scale is None else np.broadcast_to(scale, a.shape)
    local = np.zeros((system.n_elements, 4))
    for t in _GAUSS2:
        kappa = ((6 - 12 * t) * a + (6 * t - 2) * b) / h**2
        dn = np.array([-6 + 12 * t, h * (-4 + 6 * t), 6 - 12 * t, h * (-2 + 6 * t)]) / h**2
        local += (0.5 * h * weight * kappa)[:, None] * dn[None, :]
    out = np.zeros(system.ndof + 1)
    np.add.at(out, system.element_dofs, system.config.ei * local)
    return out[:-1]


def beam_energy(state, system, d=None, ei_scale=1.0):
    """Kinetic plus strain energy with the well-conditioned strain evaluation."""
    v = state.velocity
    return 0.5 * float(v @ system.mass @ v) + strain_energy(system, state.displacement, d, ei_scale)
