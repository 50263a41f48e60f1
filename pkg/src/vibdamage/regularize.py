"""MAP damage estimate under a truncated Gaussian prior.

Minimizes ``||S (m - f(d) - mu)||^2 + ||d||^2 / lam^2`` over
``0 <= d_i < 1`` with a projected Levenberg-Marquardt iteration.
"""
from dataclasses import dataclass, field

import numpy as np

from .modal import forward_map
from .optim import forward_difference_jacobian, levenberg_marquardt

UPPER = 1.0 - 1e-9
DEFAULT_LAMBDA = 0.1


@dataclass
class MapProblem:
    system: object
    measurement: np.ndarray
    noise: object
    lam: float = DEFAULT_LAMBDA
    n_modes: int = 3
    initial_d: np.ndarray = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        self.measurement = np.asarray(self.measurement, dtype=float)
        expected = self.n_modes * (self.system.n_sensors + 1)
        if self.measurement.size != expected or self.noise.dim != expected:
            raise ValueError(
                f"observation length {self.measurement.size} / noise dimension "
                f"{self.noise.dim} do not match {self.n_modes} modes x "
                f"{self.system.n_sensors} sensors ({expected})"
            )
        if self.initial_d is None:
            self.initial_d = np.zeros(self.system.n_elements)

    @property
    def n(self):
        return self.system.n_elements

    def whitened_forward(self, d):
        return self.noise.whitener @ forward_map(self.system, d, self.n_modes)

    def data_residual(self, d):
        target = self.measurement - self.noise.mean
        return self.noise.whitener @ (target - forward_map(self.system, d, self.n_modes))

    def residual(self, d):
        return np.concatenate([self.data_residual(d), np.asarray(d) / self.lam])


@dataclass
class MapResult:
    d: np.ndarray
    objective: float
    iterations: int
    converged: bool
    reason: str
    active_bounds: list = field(default_factory=list)
    history: list = field(default_factory=list)


def project(d):
    return np.clip(d, 0.0, UPPER)


def map_objective(d, problem):
    d = np.asarray(d, dtype=float)
    if np.any(d < 0) or np.any(d >= 1):
        return np.inf
    r = problem.residual(d)
    return float(r @ r)


def map_jacobian(d, problem, step=1e-6):
    """Forward-difference Jacobian of ``S f(d)``, shape (n_obs, N)."""
    d = np.asarray(d, dtype=float)
    f0 = problem.whitened_forward(d)
    lower = np.zeros(d.size)
    upper = np.full(d.size, UPPER)
    return forward_difference_jacobian(problem.whitened_forward, d, f0, step, lower, upper)


def solve_map(problem, max_iter=500, gtol=1e-8, xtol=1e-10, ftol=1e-10):
    """Projected LM solve; the best iterate is returned even without convergence."""
    n = problem.n
    eye = np.eye(n) / problem.lam

    def jac(d, r):
        return np.vstack([-map_jacobian(d, problem), eye])

    def projected_gradient(d, g):
        return d - project(d - g)

    res = levenberg_marquardt(
        problem.residual, problem.initial_d, jac, project=project, max_iter=max_iter,
        gtol=gtol, xtol=xtol, ftol=ftol, scaling=False, projected_gradient=projected_gradient,
        bounds=(np.zeros(n), np.full(n, UPPER)),
    )
    d = res.x
    active = [int(i) for i in np.flatnonzero((d <= 0.0) | (d >= UPPER))]
    return MapResult(d, res.cost, res.iterations, res.converged, res.reason, active, res.history)


def lambda_sweep(problem, lambdas, **kw):
    """Solve the MAP problem for each prior scale in ``lambdas``."""
    out = []
    for lam in lambdas:
        p = MapProblem(problem.system, problem.measurement, problem.noise, lam, problem.n_modes)
        out.append(solve_map(p, **kw))
    return out


def reconstruction_statistics(reconstructions):
    """Element-wise (min, mean, max) over a list of damage vectors."""
    arr = np.atleast_2d(np.asarray(reconstructions, dtype=float))
    if arr.shape[0] < 1:
        raise ValueError("need at least one reconstruction")
    return {"min": arr.min(axis=0), "mean": arr.mean(axis=0), "max": arr.max(axis=0)}
