"""Euler-Bernoulli cantilever discretized with cubic Hermite elements.

Degrees of freedom are ordered (value, slope) per node, nodes left to right.
The two clamped DOFs at x = 0 are eliminated, so every global matrix is
2N x 2N for an N-element mesh.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg


def default_sensors(length, count=7):
    """Uniform sensor layout ``s * L / count`` for ``s = 1..count``."""
    return tuple(length * s / count for s in range(1, count + 1))


@dataclass(frozen=True)
class BeamConfig:
    """Physical and mesh parameters of the cantilever.

    Units are SI: ``length`` in m, ``ei`` in N m^2, ``mu`` in kg/m,
    ``alpha`` in 1/s and ``beta`` in s. ``sensors`` defaults to seven
    equally spaced points with the last one at the free end.
    """

    length: float = 1.4
    ei: float = 131.25
    mu: float = 2.3
    elements: int = 100
    alpha: float = 0.15
    beta: float = 2e-5
    sensors: tuple = None

    def __post_init__(self):
        if self.sensors is None:
            object.__setattr__(self, "sensors", default_sensors(self.length))
        object.__setattr__(self, "sensors", tuple(float(s) for s in self.sensors))
        if not self.length > 0:
            raise ValueError(f"length must be positive, got {self.length}")
        if not self.ei > 0:
            raise ValueError(f"ei must be positive, got {self.ei}")
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if int(self.elements) != self.elements or self.elements < 2:
            raise ValueError(f"elements must be an integer >= 2, got {self.elements}")
        object.__setattr__(self, "elements", int(self.elements))
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("damping parameters must be non-negative")
        s = np.asarray(self.sensors)
        if s.size == 0:
            raise ValueError("at least one sensor is required")
        if np.any(s <= 0) or np.any(s > self.length * (1 + 1e-12)):
            raise ValueError(f"sensor positions must lie in (0, L]; got {self.sensors}")
        if np.any(np.diff(s) <= 0):
            raise ValueError("sensor positions must be strictly increasing")
        if s.size >= self.elements:
            raise ValueError("sensor count must be smaller than the element count")

    @property
    def sensor_count(self):
        return len(self.sensors)

    @property
    def h(self):
        return self.length / self.elements

    def replace(self, **changes):
        fields = dict(
            length=self.length, ei=self.ei, mu=self.mu, elements=self.elements,
            alpha=self.alpha, beta=self.beta, sensors=self.sensors,
        )
        if "length" in changes and "sensors" not in changes:
            # sensors scale with the beam so the free-end sensor stays at the tip
            scale = changes["length"] / self.length
            fields["sensors"] = tuple(x * scale for x in self.sensors)
        fields.update(changes)
        return BeamConfig(**fields)

    def element_midpoints(self):
        return (np.arange(self.elements) + 0.5) * self.h

    def as_dict(self):
        return dict(
            length=self.length, ei=self.ei, mu=self.mu, elements=self.elements,
            alpha=self.alpha, beta=self.beta, sensors=list(self.sensors),
        )


def hermite_element_matrices(h, mu, ei):
    """Consistent mass and stiffness matrices of one Hermite beam element.

    Parameters
    ----------
    h : float
        Element length.
    mu : float
        Mass per unit length.
    ei : float
        Flexural rigidity.

    Returns
    -------
    local_mass, local_stiffness : ndarray, shape (4, 4)
        Matrices in (value, slope, value, slope) ordering.
    """
    if not (h > 0 and mu > 0 and ei > 0):
        raise ValueError(f"h, mu and ei must be positive (got {h}, {mu}, {ei})")
    mass = mu * h / 420.0 * np.array([
        [156.0, 22 * h, 54.0, -13 * h],
        [22 * h, 4 * h * h, 13 * h, -3 * h * h],
        [54.0, 13 * h, 156.0, -22 * h],
        [-13 * h, -3 * h * h, -22 * h, 4 * h * h],
    ])
    stiffness = ei / h**3 * np.array([
        [12.0, 6 * h, -12.0, 6 * h],
        [6 * h, 4 * h * h, -6 * h, 2 * h * h],
        [-12.0, -6 * h, 12.0, -6 * h],
        [6 * h, 2 * h * h, -6 * h, 4 * h * h],
    ])
    return mass, stiffness


def hermite_shape(xi, h):
    """Cubic Hermite basis values at local coordinate ``xi`` in [0, 1]."""
    return np.array([
        1 - 3 * xi**2 + 2 * xi**3,
        h * (xi - 2 * xi**2 + xi**3),
        3 * xi**2 - 2 * xi**3,
        h * (-(xi**2) + xi**3),
    ])


@dataclass(frozen=True, eq=False)
class BeamSystem:
    """Assembled matrices of one discretization.

    ``element_blocks[i]`` is the 4x4 stiffness of element i at the
    configured EI and ``element_dofs[i]`` maps its local DOFs to reduced
    global indices (-1 marks an eliminated clamped DOF).
    """

    config: BeamConfig
    mass: np.ndarray
    element_blocks: np.ndarray
    element_dofs: np.ndarray
    observation: np.ndarray
    _mass_chol: np.ndarray = field(repr=False)
    _scatter_index: np.ndarray = field(repr=False)
    _scatter_mask: np.ndarray = field(repr=False)

    @property
    def ndof(self):
        return self.mass.shape[0]

    @property
    def n_elements(self):
        return self.config.elements

    @property
    def n_sensors(self):
        return self.observation.shape[0]

    @property
    def mass_cholesky(self):
        """Lower Cholesky factor of M (M = L L^T)."""
        return self._mass_chol

    def element_stiffness(self, i):
        """Dense 2N x 2N stiffness contribution of element ``i``."""
        w = np.zeros(self.n_elements)
        w[i] = 1.0
        return self._scatter(w)

    def stiffness(self):
        """Undamaged global stiffness K."""
        return self._scatter(np.ones(self.n_elements))

    def _scatter(self, weights):
        n = self.ndof
        vals = (weights[:, None, None] * self.element_blocks).reshape(-1)
        flat = np.bincount(
            self._scatter_index, weights=vals[self._scatter_mask], minlength=n * n
        )
        return flat.reshape(n, n)


def assemble_system(config):
    """Assemble mass, element stiffness blocks and the sensor matrix."""
    n_el = config.elements
    h = config.h
    me, ke = hermite_element_matrices(h, config.mu, config.ei)
    ndof = 2 * n_el
    dofs = np.array([[2 * i - 2, 2 * i - 1, 2 * i, 2 * i + 1] for i in range(n_el)])
    dofs[dofs < 0] = -1

    mass = np.zeros((ndof, ndof))
    for el in dofs:
        keep = el >= 0
        idx = el[keep]
        mass[np.ix_(idx, idx)] += me[np.ix_(keep, keep)]

    rows = np.repeat(dofs, 4, axis=1)
    cols = np.tile(dofs, (1, 4))
    mask = ((rows >= 0) & (cols >= 0)).reshape(-1)
    index = (rows * ndof + cols).reshape(-1)[mask]

    observation = np.zeros((config.sensor_count, ndof))
    for s, x in enumerate(config.sensors):
        e, xi = _locate(x, h, n_el)
        weights = hermite_shape(xi, h)
        for local, g in enumerate(dofs[e]):
            if g >= 0:
                observation[s, g] += weights[local]
    observation[np.abs(observation) < 1e-15] = 0.0

    chol = scipy.linalg.cholesky(mass, lower=True)
    return BeamSystem(
        config=config,
        mass=mass,
        element_blocks=np.broadcast_to(ke, (n_el, 4, 4)).copy(),
        element_dofs=dofs,
        observation=observation,
        _mass_chol=chol,
        _scatter_index=index,
        _scatter_mask=mask,
    )


def _locate(x, h, n_el):
    """Element index and local coordinate of point ``x``."""
    if x <= 0 or x > h * n_el * (1 + 1e-12):
        raise ValueError(f"point {x} outside the beam (0, {h * n_el}]")
    r = x / h
    nearest = round(r)
    if abs(r - nearest) < 1e-9:
        r = float(nearest)
    e = min(int(np.floor(r)), n_el - 1)
    return e, min(max(r - e, 0.0), 1.0)


def check_damage(d, n_elements):
    d = np.asarray(d, dtype=float)
    if d.shape != (n_elements,):
        raise ValueError(f"damage vector must have shape ({n_elements},), got {d.shape}")
    if np.any(d < 0) or np.any(d >= 1) or not np.all(np.isfinite(d)):
        raise ValueError("damage entries must lie in [0, 1)")
    return d


def damaged_stiffness(system, d):
    """Return sum_i (1 - d_i) K_i for a damage vector ``d``."""
    d = check_damage(d, system.n_elements)
    return system._scatter(1.0 - d)


def element_containing(x, config):
    """Zero-based index of the element containing coordinate ``x``."""
    return min(int(x // config.h), config.elements - 1)
