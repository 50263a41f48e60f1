"""Dual-beam ensemble smoother for joint state and damage estimation.

Every member carries two copies of the beam: one forced to stay intact and
one with element damage, sharing EI and the damping parameters. Both are
compared with the same (duplicated) sensor record. The state vector layout
is::

    [v_intact (2N), u_intact (2N), v (2N), u (2N), EI, d (N), alpha, beta]

for a total of 9N + 3 entries. Over each window the members are forecast
with the implicit midpoint map, their predicted sensor readings (every
``stride``-th sample, both beams) are stacked, and one Kalman analysis
updates parameters and end-of-window states together.
"""
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize_scalar

from . import rng as rngmod
from .errors import DegenerateEnsembleError, DivergedMemberError
from .fem import BeamConfig, assemble_system
from .integrate import propagator
from .modal import solve_modes


@dataclass
class EnkfConfig:
    beam: BeamConfig = field(
        default_factory=lambda: BeamConfig(elements=25, ei=133.0, alpha=0.15, beta=2e-5)
    )
    ensemble_size: int = 100
    window_seconds: float = 8.0
    stride: int = 8
    substeps: int = 32
    fit_modes: int = 8
    # search EI jointly with the modal amplitudes in the initial fit
    fit_ei: bool = False
    seed: int = 0
    # analysis noise: measurement std relative to per-sensor window amplitude
    meas_fraction: float = 0.002
    state_noise_fraction: float = 1e-6
    ei_noise_fraction: float = 0.01
    d_noise: float = 0.02
    alpha_noise: float = 0.01
    beta_noise: float = 1e-6
    # initial perturbations
    init_state_fraction: float = 0.01
    init_ei_fraction: float = 0.05
    init_d: float = 0.02
    init_alpha_fraction: float = 0.2
    init_beta_fraction: float = 0.5
    d_max: float = 0.999
    ei_bounds: tuple = (0.1, 10.0)

    def __post_init__(self):
        if self.ensemble_size < 2:
            raise ValueError("ensemble needs at least two members")
        if self.stride < 1 or self.substeps < 1:
            raise ValueError("stride and substeps must be positive")


class StateLayout:
    """Index helpers for the 9N + 3 state vector."""

    def __init__(self, n_elements):
        self.n = n_elements
        m = 2 * n_elements
        self.ndof = m
        self.v0 = slice(0, m)
        self.u0 = slice(m, 2 * m)
        self.v = slice(2 * m, 3 * m)
        self.u = slice(3 * m, 4 * m)
        self.beams = slice(0, 4 * m)
        self.ei = 4 * m
        self.d = slice(4 * m + 1, 4 * m + 1 + n_elements)
        self.alpha = 4 * m + 1 + n_elements
        self.beta = self.alpha + 1
        self.size = self.beta + 1
        assert self.size == 9 * n_elements + 3


@dataclass
class Ensemble:
    members: np.ndarray  # (9N+3, Ne)
    layout: StateLayout
    model_noise: np.ndarray = None  # diagonal std of Sigma_mod
    meas_noise: np.ndarray = None  # diagonal std of Sigma_meas (one window)
    diagnostics: dict = field(default_factory=dict)

    @property
    def size(self):
        return self.members.shape[1]

    def mean(self):
        return self.members.mean(axis=1)

    def spread(self):
        return self.members.std(axis=1, ddof=1)


@dataclass
class Forecast:
    predicted: np.ndarray  # (n_obs, Ne) stacked (B u_intact, B u) over the window
    members: np.ndarray  # end-of-window ensemble


def duplicate_measurement(samples):
    """Stack each p-vector twice: rows (m_k, m_k) flattened in time order."""
    samples = np.asarray(samples, dtype=float)
    return np.concatenate([samples, samples], axis=1).reshape(-1)


def _transitions(system, cfg, d, ei, alpha, beta, dt):
    scale = ei / system.config.ei
    prop = propagator(system, d, scale, alpha, beta, dt / cfg.substeps)
    return np.linalg.matrix_power(prop.transition_matrix(), cfg.substeps * cfg.stride)


def forecast(ensemble, system, cfg, n_times, dt):
    """Advance every member over ``n_times`` observation times.

    Observations are recorded at times 0, stride, ..., (n_times-1)*stride
    (in samples); the returned members are at ``n_times * stride``.
    """
    lay = ensemble.layout
    X = ensemble.members
    ne = X.shape[1]
    m = lay.ndof
    B = system.observation
    p = B.shape[0]
    zero = np.zeros(lay.n)
    G = np.empty((2, ne, 2 * m, 2 * m))
    for j in range(ne):
        ei, a, b = X[lay.ei, j], X[lay.alpha, j], X[lay.beta, j]
        G[0, j] = _transitions(system, cfg, zero, ei, a, b, dt)
        G[1, j] = _transitions(system, cfg, X[lay.d, j], ei, a, b, dt)
    state = np.stack([X[0:2 * m].T, X[2 * m:4 * m].T])  # (2, Ne, 2m)
    pred = np.empty((n_times, 2, p, ne))
    for k in range(n_times):
        pred[k] = np.einsum("ps,bjs->bpj", B, state[:, :, m:], optimize=True)
        state = np.einsum("bjrs,bjs->bjr", G, state, optimize=True)
    bad = ~np.all(np.isfinite(state), axis=(0, 2))
    if bad.any():
        raise DivergedMemberError(int(np.flatnonzero(bad)[0]))
    out = X.copy()
    out[0:2 * m] = state[0].T
    out[2 * m:4 * m] = state[1].T
    return Forecast(pred.reshape(n_times * 2 * p, ne), out)


def analysis_update(members, predicted, measurement, meas_std, model_std, rng, layout=None,
                    cfg=None, perturb_measurements=True):
    """One stochastic EnKF analysis in ensemble space.

    ``predicted`` holds H applied to every member (n_obs x Ne) and
    ``measurement`` the duplicated stacked record. The gain
    ``A (HA)^T P^-1`` is applied through an SVD of ``R^-1/2 HA / sqrt(Ne-1)``
    with singular values below 1e-10 of the largest dropped.
    """
    ne = members.shape[1]
    Xh = members.copy()
    if model_std is not None and np.any(model_std > 0):
        Xh += model_std[:, None] * rng.standard_normal(Xh.shape)
    r_std = np.asarray(meas_std, dtype=float)
    D = measurement[:, None] - predicted
    if perturb_measurements:
        D = D + r_std[:, None] * rng.standard_normal(predicted.shape)
    A = Xh - Xh.mean(axis=1, keepdims=True)
    HA = predicted - predicted.mean(axis=1, keepdims=True)
    S = HA / r_std[:, None] / np.sqrt(ne - 1)
    U, sig, Vt = np.linalg.svd(S, full_matrices=False)
    if sig.size == 0 or sig[0] == 0:
        raise DegenerateEnsembleError("predicted-observation anomalies have rank zero")
    keep = sig > 1e-10 * sig[0]
    U, sig, Vt = U[:, keep], sig[keep], Vt[keep]
    coeff = (Vt.T * (sig / (1.0 + sig**2))) @ (U.T @ (D / r_std[:, None]))
    Xa = Xh + A @ coeff / np.sqrt(ne - 1)
    if layout is not None and cfg is not None:
        clamp(Xa, layout, cfg)
    return Xa


def clamp(X, layout, cfg):
    X[layout.d] = np.clip(X[layout.d], 0.0, cfg.d_max)
    lo, hi = cfg.ei_bounds
    X[layout.ei] = np.clip(X[layout.ei], lo * cfg.beam.ei, hi * cfg.beam.ei)
    X[layout.alpha] = np.maximum(X[layout.alpha], 0.0)
    X[layout.beta] = np.maximum(X[layout.beta], 0.0)
    return X


def fit_initial_state(system, cfg, samples, dt, ei=None):
    """Least-squares initial (v, u) of the intact nominal model.

    The basis is the free response of the lowest ``cfg.fit_modes`` modes
    (unit displacement and unit velocity for each), propagated with the same
    discrete map the filter uses, so the fit is linear in the amplitudes.
    """
    n_times = samples.shape[0]
    nmodes = min(cfg.fit_modes, system.ndof)
    omega, shapes = solve_modes(system, np.zeros(system.n_elements), nmodes)
    m = system.ndof
    basis = np.zeros((2 * m, 2 * nmodes))
    basis[m:, :nmodes] = shapes
    basis[:m, nmodes:] = shapes * omega
    beam = cfg.beam
    ei = beam.ei if ei is None else ei
    omega = omega * np.sqrt(ei / system.config.ei)
    basis[:m, nmodes:] = shapes * omega
    G = _transitions(system, cfg, np.zeros(system.n_elements), ei, beam.alpha, beam.beta, dt)
    B = system.observation
    cols = np.empty((n_times, B.shape[0], 2 * nmodes))
    x = basis
    for k in range(n_times):
        cols[k] = B @ x[m:]
        x = G @ x
    design = cols.reshape(-1, 2 * nmodes)
    target = samples.reshape(-1)
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    fitted = design @ coef
    rel = np.linalg.norm(fitted - target) / max(np.linalg.norm(target), 1e-300)
    state = basis @ coef
    return state[:m], state[m:], float(rel)


def fit_stiffness(system, cfg, samples, dt, span=0.2, grid=41):
    """EI minimizing the initial-fit residual.

    The residual is sharply peaked in EI (phase errors accumulate over the
    window), so a coarse grid over ``EI_nom * (1 +- span)`` brackets the
    minimum before a bounded scalar refinement.
    """
    nominal = cfg.beam.ei

    def resid(ei):
        return fit_initial_state(system, cfg, samples, dt, ei=ei)[2]

    trial = nominal * np.linspace(1 - span, 1 + span, grid)
    vals = [resid(e) for e in trial]
    k = int(np.argmin(vals))
    lo, hi = trial[max(k - 1, 0)], trial[min(k + 1, grid - 1)]
    res = minimize_scalar(resid, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-6 * nominal})
    return float(res.x) if res.fun <= vals[k] else float(trial[k])


def build_initial_ensemble(system, cfg, window_samples, dt, rng):
    """Fitted intact state replicated into both beams plus perturbations."""
    lay = StateLayout(system.n_elements)
    ne = cfg.ensemble_size
    beam = cfg.beam
    diagnostics = {}
    ei0 = beam.ei
    try:
        if cfg.fit_ei:
            ei0 = fit_stiffness(system, cfg, window_samples, dt)
            diagnostics["fit_ei"] = ei0
        v, u, rel = fit_initial_state(system, cfg, window_samples, dt, ei=ei0)
        diagnostics["fit_residual"] = rel
        state_fraction = cfg.init_state_fraction
        if not np.isfinite(rel):
            raise FloatingPointError
    except (np.linalg.LinAlgError, FloatingPointError):
        v = np.zeros(lay.ndof)
        u = np.zeros(lay.ndof)
        diagnostics["fit_failed"] = True
        state_fraction = 10 * cfg.init_state_fraction
    base = np.zeros(lay.size)
    base[lay.v0], base[lay.u0] = v, u
    base[lay.v], base[lay.u] = v, u
    base[lay.ei] = ei0
    base[lay.alpha], base[lay.beta] = beam.alpha, beam.beta

    X = np.repeat(base[:, None], ne, axis=1)
    beams = np.concatenate([v, u])
    scale = np.abs(beams) if np.any(beams) else np.full(beams.size, state_fraction)
    pert = beams[:, None] + state_fraction * scale[:, None] * rng.standard_normal((beams.size, ne))
    X[0:2 * lay.ndof] = pert
    X[2 * lay.ndof:4 * lay.ndof] = pert
    X[lay.ei] = ei0 * (1 + cfg.init_ei_fraction * rng.standard_normal(ne))
    X[lay.d] = cfg.init_d * rng.standard_normal((lay.n, ne))
    X[lay.alpha] = beam.alpha * (1 + cfg.init_alpha_fraction * rng.standard_normal(ne))
    X[lay.beta] = beam.beta * (1 + cfg.init_beta_fraction * rng.standard_normal(ne))
    clamp(X, lay, cfg)
    return Ensemble(X, lay, diagnostics=diagnostics)


def model_noise_std(layout, cfg, amplitude):
    std = np.zeros(layout.size)
    std[layout.beams] = cfg.state_noise_fraction * amplitude
    std[layout.ei] = cfg.ei_noise_fraction * cfg.beam.ei
    std[layout.d] = cfg.d_noise
    std[layout.alpha] = cfg.alpha_noise
    std[layout.beta] = cfg.beta_noise
    return std


@dataclass
class SmootherResult:
    """Per-window ensemble statistics of the parameters."""

    d_mean: np.ndarray  # (windows, N)
    d_spread: np.ndarray
    ei: np.ndarray  # (windows, 2): mean, spread
    alpha: np.ndarray
    beta: np.ndarray
    diagnostics: dict = field(default_factory=dict)

    @property
    def windows(self):
        return self.d_mean.shape[0]

    @property
    def final_damage(self):
        return self.d_mean[-1]


def run_smoother(mset, cfg=None, system=None):
    """Ensemble smoother over consecutive windows of a measurement set."""
    cfg = cfg or EnkfConfig()
    if system is None:
        system = assemble_system(cfg.beam.replace(sensors=cfg.beam.sensors))
    samples = np.asarray(mset.samples, dtype=float)
    if samples.shape[1] != system.n_sensors:
        raise ValueError(
            f"measurement has {samples.shape[1]} sensors, model has {system.n_sensors}"
        )
    dt = float(mset.times[1] - mset.times[0])
    per_window = int(round(cfg.window_seconds / dt))
    if per_window % cfg.stride:
        raise ValueError("window length must be a multiple of the stride")
    windows = samples.shape[0] // per_window
    if windows < 1:
        raise ValueError("measurement shorter than one window")
    n_times = per_window // cfg.stride
    lay = StateLayout(system.n_elements)

    first = samples[0:per_window:cfg.stride]
    ens = build_initial_ensemble(system, cfg, first, dt, rngmod.stream(cfg.seed, "enkf", "init"))
    X = ens.members
    stats = {k: [] for k in ("d_mean", "d_spread", "ei", "alpha", "beta")}
    for w in range(windows):
        obs = samples[w * per_window:(w + 1) * per_window:cfg.stride]
        amp = np.max(np.abs(obs), axis=0)
        meas_std = np.tile(np.concatenate([amp, amp]) * cfg.meas_fraction, n_times)
        meas_std = np.maximum(meas_std, 1e-12 * max(amp.max(), 1e-300))
        fc = forecast(Ensemble(X, lay), system, cfg, n_times, dt)
        rng = rngmod.stream(cfg.seed, "enkf", "analysis", w)
        X = analysis_update(
            fc.members, fc.predicted, duplicate_measurement(obs), meas_std,
            model_noise_std(lay, cfg, amp.max()), rng, lay, cfg,
        )
        stats["d_mean"].append(X[lay.d].mean(axis=1))
        stats["d_spread"].append(X[lay.d].std(axis=1, ddof=1))
        for key, idx in (("ei", lay.ei), ("alpha", lay.alpha), ("beta", lay.beta)):
            stats[key].append([X[idx].mean(), X[idx].std(ddof=1)])
    return SmootherResult(
        d_mean=np.array(stats["d_mean"]),
        d_spread=np.array(stats["d_spread"]),
        ei=np.array(stats["ei"]),
        alpha=np.array(stats["alpha"]),
        beta=np.array(stats["beta"]),
        diagnostics=dict(ens.diagnostics, windows=windows),
    )
