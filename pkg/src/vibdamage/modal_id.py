"""Frequency-domain identification of freely decaying modes.

Each mode is a damped oscillator
``A exp(-zeta w t) cos(w sqrt(1 - zeta^2) t + phi)`` seen through a sensor
shape ``h``. The fit compares complex DFT coefficients of model and data on a
few bins around each resonance. The model DFT is the exact discrete
transform of the sampled oscillator (a geometric series), so model and data
share the same grid and transform.
"""
from dataclasses import dataclass, field

import numpy as np
import scipy.signal

from .errors import IdentificationError
from .modal import stack_observation
from .optim import forward_difference_jacobian, levenberg_marquardt


@dataclass
class OscillatorParams:
    amplitude: float
    omega: float
    zeta: float
    phase: float
    shape: np.ndarray

    def __post_init__(self):
        self.shape = np.asarray(self.shape, dtype=float)


@dataclass
class FrequencyBands:
    """Contiguous FFT bin groups, one per mode, sorted by frequency."""

    groups: list
    peaks: list = field(default_factory=list)

    @property
    def bins(self):
        return np.concatenate([np.asarray(g) for g in self.groups])

    def edges(self):
        return [(int(g[0]), int(g[-1])) for g in self.groups]


@dataclass
class FitDiagnostics:
    residual: float
    iterations: int
    reason: str
    band_edges: list
    data_energy: float


def _spectrum(samples, taper):
    x = samples - samples.mean(axis=0)
    if taper:
        x = x * scipy.signal.windows.hann(x.shape[0], sym=False)[:, None]
    return np.abs(np.fft.rfft(x, axis=0)).mean(axis=1)


def pick_bands(mset, n, guard=2, taper=True):
    """Bin groups around the ``n`` largest well-separated spectral peaks.

    Peaks are ranked on the sensor-averaged magnitude spectrum (Hann-tapered
    by default, which keeps truncation sidelobes of the dominant mode from
    masquerading as peaks). Each group holds the contiguous bins at or above
    ``peak / sqrt(2)`` widened by ``guard`` bins per side.
    """
    if n < 1:
        raise ValueError("n must be at least 1")
    samples = np.asarray(mset.samples if hasattr(mset, "samples") else mset, dtype=float)
    if samples.ndim == 1:
        samples = samples[:, None]
    mag = _spectrum(samples, taper)
    nbins = mag.size
    cand, _ = scipy.signal.find_peaks(mag)
    cand = cand[cand > 0]
    order = cand[np.argsort(mag[cand])[::-1]]

    groups, peaks = [], []
    for k in order:
        level = mag[k] / np.sqrt(2.0)
        lo = k
        while lo - 1 > 0 and mag[lo - 1] >= level:
            lo -= 1
        hi = k
        while hi + 1 < nbins and mag[hi + 1] >= level:
            hi += 1
        lo, hi = max(lo - guard, 1), min(hi + guard, nbins - 1)
        if any(lo <= g_hi and hi >= g_lo for g_lo, g_hi in groups):
            continue
        groups.append((lo, hi))
        peaks.append(int(k))
        if len(groups) == n:
            break
    if len(groups) < n:
        raise IdentificationError(
            f"found only {len(groups)} separated spectral peaks, {n} requested"
        )
    order = np.argsort(peaks)
    return FrequencyBands(
        groups=[np.arange(groups[i][0], groups[i][1] + 1) for i in order],
        peaks=[peaks[i] for i in order],
    )


def oscillator_dft(omega, zeta, phase, bins, count, dt):
    """Exact DFT of the sampled unit oscillator at the given bins."""
    sigma = zeta * omega
    wd = omega * np.sqrt(max(1.0 - zeta * zeta, 0.0))
    w = np.exp(-2j * np.pi * np.asarray(bins) / count)
    out = 0.0
    for sign in (1.0, -1.0):
        z = np.exp((-sigma + sign * 1j * wd) * dt)
        out = out + 0.5 * np.exp(sign * 1j * phase) * (1.0 - z**count) / (1.0 - z * w)
    return out


def oscillator_signal(params, times):
    """Time-domain superposition of oscillators, shape (len(times), p)."""
    t = np.asarray(times) - times[0]
    out = 0.0
    for m in params:
        wd = m.omega * np.sqrt(1.0 - m.zeta**2)
        xi = m.amplitude * np.exp(-t * m.zeta * m.omega) * np.cos(t * wd + m.phase)
        out = out + xi[:, None] * m.shape[None, :]
    return out


class _ModalModel:
    def __init__(self, samples, dt, bands):
        self.count, self.p = samples.shape
        self.dt = dt
        self.bins = bands.bins
        self.data = np.fft.rfft(samples, axis=0)[self.bins]  # (nb, p)
        self.n = len(bands.groups)

    def unpack(self, x):
        blocks = x.reshape(self.n, 3 + self.p)
        return blocks[:, 0], blocks[:, 1], blocks[:, 2], blocks[:, 3:]

    def model(self, x):
        om, ze, ph, g = self.unpack(x)
        out = np.zeros((self.bins.size, self.p), dtype=complex)
        for i in range(self.n):
            out += oscillator_dft(om[i], ze[i], ph[i], self.bins, self.count, self.dt)[:, None] * g[i]
        return out

    def residual(self, x):
        diff = (self.model(x) - self.data).reshape(-1)
        return np.concatenate([diff.real, diff.imag])


def _initial_guess(model, bands, samples):
    df = 1.0 / (model.count * model.dt)
    mag = np.abs(np.fft.rfft(samples, axis=0))
    avg = mag.mean(axis=1)
    x0 = []
    for group, k in zip(bands.groups, bands.peaks):
        # peak bin of the raw spectrum inside the group
        k = int(group[np.argmax(avg[group])])
        shift = 0.0
        if 0 < k < avg.size - 1:
            a, b, c = np.log(avg[k - 1:k + 2] + 1e-300)
            denom = a - 2 * b + c
            if denom < 0:
                shift = float(np.clip(0.5 * (a - c) / denom, -0.5, 0.5))
        f0 = (k + shift) * df
        level = avg[k] / np.sqrt(2.0)
        width = np.count_nonzero(avg[group] >= level) * df
        omega = 2 * np.pi * f0
        zeta = float(np.clip(width / (2 * f0), 1e-5, 0.5))
        sigma, wd = zeta * omega, omega * np.sqrt(1 - zeta**2)
        z = np.exp((-sigma + 1j * wd) * model.dt)
        resp = (1.0 - z**model.count) / (1.0 - z * np.exp(-2j * np.pi * k / model.count))
        coef = 2.0 * np.fft.rfft(samples, axis=0)[k] / resp
        ref = np.argmax(np.abs(coef))
        phase = float(np.angle(coef[ref]))
        g = np.real(coef * np.exp(-1j * phase))
        x0.extend([omega, zeta, phase, *g])
    return np.asarray(x0)


def fit_modes(mset, bands, x0=None, max_iter=500, ftol=1e-10):
    """Least-squares fit of damped oscillators on the band bins.

    Returns
    -------
    params : list of OscillatorParams
        Sorted by frequency, unit-norm shapes with non-negative last entry.
    diagnostics : FitDiagnostics
        ``residual`` is the summed squared DFT mismatch over the bins.
    """
    samples = np.asarray(mset.samples, dtype=float)
    dt = float(mset.times[1] - mset.times[0])
    model = _ModalModel(samples, dt, bands)
    if x0 is None:
        x0 = _initial_guess(model, bands, samples)
    else:
        x0 = _pack(x0)

    stride = 3 + model.p
    lower = np.full(x0.size, -np.inf)
    upper = np.full(x0.size, np.inf)
    lower[0::stride] = 1e-9
    lower[1::stride] = 0.0
    upper[1::stride] = 0.999

    def project(x):
        return np.clip(x, lower, upper)

    def jac(x, r):
        step = 1e-7 * np.maximum(np.abs(x), 1e-3)
        step[1::stride] = 1e-7 * np.maximum(np.abs(x[1::stride]), 1e-4)
        return forward_difference_jacobian(model.residual, x, r, step, lower, upper)

    res = levenberg_marquardt(
        model.residual, x0, jac, project=project, max_iter=max_iter,
        gtol=0.0, xtol=1e-14, ftol=ftol,
    )
    if not res.converged:
        raise IdentificationError(
            f"modal fit did not converge in {max_iter} iterations", best_residual=res.cost
        )
    params = _unpack(res.x, model)
    diag = FitDiagnostics(
        residual=res.cost,
        iterations=res.iterations,
        reason=res.reason,
        band_edges=bands.edges(),
        data_energy=float(np.sum(np.abs(model.data) ** 2)),
    )
    return params, diag


def _pack(params):
    x = []
    for m in params:
        x.extend([m.omega, m.zeta, m.phase, *(m.amplitude * m.shape)])
    return np.asarray(x, dtype=float)


def _unpack(x, model):
    om, ze, ph, g = model.unpack(x)
    out = []
    for i in range(model.n):
        amp = float(np.linalg.norm(g[i]))
        shape = g[i] / amp if amp > 0 else g[i].copy()
        phase = float(ph[i])
        if shape[-1] < 0:
            shape, phase = -shape, phase + np.pi
        phase = float(np.angle(np.exp(1j * phase)))
        out.append(OscillatorParams(amp, float(om[i]), float(ze[i]), phase, shape))
    out.sort(key=lambda m: m.omega)
    return out


def fit_residual(mset, bands, params):
    """Objective value of ``params`` on the band bins."""
    samples = np.asarray(mset.samples, dtype=float)
    model = _ModalModel(samples, float(mset.times[1] - mset.times[0]), bands)
    r = model.residual(_pack(params))
    return float(r @ r)


def to_modal_observation(params):
    """Stack (omega_i, h_i) of frequency-sorted oscillators."""
    if not params:
        return np.zeros(0)
    omegas = np.array([m.omega for m in params])
    if np.any(np.diff(omegas) <= 0):
        raise ValueError("oscillators must be sorted by strictly increasing frequency")
    return stack_observation(omegas, [m.shape for m in params])


def identify(mset, n=3, guard=2):
    """Bands, fit and stacked observation in one call."""
    bands = pick_bands(mset, n, guard=guard)
    params, diag = fit_modes(mset, bands)
    return to_modal_observation(params), params, diag
