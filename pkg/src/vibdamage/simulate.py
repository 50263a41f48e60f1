"""Synthetic measurement sets: static release, free decay, sensor noise."""
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import rng as rngmod
from .fem import BeamConfig, assemble_system, check_damage, damaged_stiffness
from .integrate import BeamState, TimeGrid, observe, propagator, simulate_trajectory

THERMAL_EXPANSION = 1.2e-5  # 1/K, steel

#: element-19 damage levels of the four simulated damage cases (case 0 is intact)
DAMAGE_LEVELS = (0.0, 0.125, 0.25, 0.375, 0.5)
DAMAGED_ELEMENT = 18  # zero-based; spans [252, 266] mm on the 100-element mesh


def case_damage(case, elements=100):
    """Damage vector of simulated damage case ``case`` (0..4)."""
    d = np.zeros(elements)
    d[DAMAGED_ELEMENT] = DAMAGE_LEVELS[case]
    return d


@dataclass
class SimulationSpec:
    base_config: BeamConfig = field(default_factory=BeamConfig)
    duration: float = 30.0
    sample_rate: float = 512.0
    damage: np.ndarray = None
    tip_displacement: tuple = (0.010, 0.001)
    tip_torque: tuple = (0.0, 0.5)
    temperature: tuple = (0.0, 5.0)
    noise_fraction: float = 0.002
    thermal_expansion: float = THERMAL_EXPANSION
    amplitude_window: float = 1.0
    record: str = "acceleration"
    bandwidth_fraction: float = 0.4
    substeps: int = 32
    seed: int = 0
    label: str = ""

    def __post_init__(self):
        if self.damage is None:
            self.damage = np.zeros(self.base_config.elements)
        self.damage = check_damage(self.damage, self.base_config.elements)
        if self.noise_fraction < 0:
            raise ValueError("noise_fraction must be non-negative")
        n = self.duration * self.sample_rate
        if abs(n - round(n)) > 1e-9 or n < 1:
            raise ValueError("duration * sample_rate must be a positive integer")

    @property
    def sample_count(self):
        return int(round(self.duration * self.sample_rate))


@dataclass
class MeasurementSet:
    """Sensor time series: ``samples[k, s]`` is sensor s at ``times[k]``."""

    times: np.ndarray
    samples: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def sample_rate(self):
        return 1.0 / (self.times[1] - self.times[0])

    @property
    def n_sensors(self):
        return self.samples.shape[1]

    def window(self, start, count):
        return MeasurementSet(
            self.times[start:start + count], self.samples[start:start + count], dict(self.metadata)
        )


def static_initial_condition(system, d, tip_displacement, tip_torque, ei_scale=1.0):
    """Static deflection released from rest.

    The tip torque acts on the free-end rotation DOF; a tip point force is
    chosen so the free end sits at ``tip_displacement``.
    """
    k = ei_scale * damaged_stiffness(system, d)
    n = system.ndof
    loads = np.zeros((n, 2))
    loads[n - 2, 0] = 1.0
    loads[n - 1, 1] = 1.0
    unit = np.linalg.solve(k, loads)
    force = (tip_displacement - tip_torque * unit[n - 2, 1]) / unit[n - 2, 0]
    u = force * unit[:, 0] + tip_torque * unit[:, 1]
    return BeamState(np.zeros(n), u)


def acceleration_state(system, d, state, alpha, beta, cutoff_hz=None):
    """State whose displacement trajectory is the acceleration of ``state``'s.

    Acceleration obeys the same damped equation as displacement, so the
    acceleration history is the free response started from
    ``(da/dt, a)(0)``. Modes above ``cutoff_hz`` are projected out, which
    plays the role of the accelerometer anti-alias filter.
    """
    k = damaged_stiffness(system, d)
    m = system.mass
    c = alpha * m + beta * k
    acc = -np.linalg.solve(m, c @ state.velocity + k @ state.displacement)
    jerk = -np.linalg.solve(m, c @ acc + k @ state.velocity)
    if cutoff_hz is not None:
        lam, phi = scipy.linalg.eigh(k, m)
        keep = np.sqrt(np.maximum(lam, 0.0)) < 2 * np.pi * cutoff_hz
        basis = phi[:, keep]
        proj = basis @ (basis.T @ m)
        acc, jerk = proj @ acc, proj @ jerk
    return BeamState(jerk, acc)


def sampled_displacements(init, system, d, alpha, beta, grid, substeps):
    """Displacements at the grid times using ``substeps`` midpoint steps per sample."""
    prop = propagator(system, d, 1.0, alpha, beta, grid.dt / substeps)
    g = np.linalg.matrix_power(prop.transition_matrix(), substeps)
    n = system.ndof
    x = np.empty((grid.steps + 1, 2 * n))
    x[0, :n], x[0, n:] = init.velocity, init.displacement
    gt = g.T
    for k in range(grid.steps):
        x[k + 1] = x[k] @ gt
    return x[:, n:]


def perturb_length(length, delta_t, coefficient=THERMAL_EXPANSION):
    out = length * (1.0 + coefficient * delta_t)
    if not out > 0:
        raise ValueError("perturbed length must stay positive")
    return out


def generate_measurement_set(spec):
    """Simulate one free-decay record with randomized release and length."""
    draw = rngmod.stream(spec.seed, "simulate")
    tip = draw.normal(*spec.tip_displacement)
    torque = draw.normal(*spec.tip_torque)
    delta_t = draw.normal(*spec.temperature)

    cfg = spec.base_config
    cfg = cfg.replace(length=perturb_length(cfg.length, delta_t, spec.thermal_expansion))
    system = assemble_system(cfg)
    init = static_initial_condition(system, spec.damage, tip, torque)
    if spec.record == "acceleration":
        init = acceleration_state(
            system, spec.damage, init, cfg.alpha, cfg.beta,
            cutoff_hz=spec.bandwidth_fraction * spec.sample_rate,
        )
    elif spec.record != "displacement":
        raise ValueError(f"unknown record kind {spec.record!r}")
    grid = TimeGrid(1.0 / spec.sample_rate, spec.sample_count - 1)
    if spec.substeps == 1:
        traj = simulate_trajectory(init, system, spec.damage, 1.0, cfg.alpha, cfg.beta, grid)
        disp = traj.displacement
    else:
        disp = sampled_displacements(
            init, system, spec.damage, cfg.alpha, cfg.beta, grid, spec.substeps
        )
    clean = observe(disp, system)

    window = max(1, int(round(spec.amplitude_window * spec.sample_rate)))
    amplitude = np.max(np.abs(clean[:window]), axis=0)
    noise = rngmod.stream(spec.seed, "noise").standard_normal(clean.shape)
    samples = clean + noise * (spec.noise_fraction * amplitude)

    metadata = {
        "label": spec.label,
        "seed": int(spec.seed),
        "damage": [float(x) for x in spec.damage],
        "tip_displacement": float(tip),
        "tip_torque": float(torque),
        "delta_temperature": float(delta_t),
        "length": float(cfg.length),
        "config": spec.base_config.as_dict(),
        "noise_fraction": float(spec.noise_fraction),
        "record": spec.record,
    }
    return MeasurementSet(grid.times(), samples, metadata)
