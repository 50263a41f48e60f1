import numpy as np
import pytest

from vibdamage.errors import IdentificationError
from vibdamage.modal_id import (
    OscillatorParams, fit_modes, identify, oscillator_dft, oscillator_signal, pick_bands,
)
from vibdamage.simulate import MeasurementSet


def _shapes():
    s = np.array([[0.05, 0.2, 0.4, 0.6, 0.8, 0.9, 1.0],
                  [-0.3, -0.6, -0.5, 0.0, 0.4, 0.2, 0.5],
                  [0.4, 0.5, -0.1, -0.5, 0.1, 0.4, -0.6]])
    return s / np.linalg.norm(s, axis=1, keepdims=True) * np.sign(s[:, -1:])


def synthetic_set(duration=30.0, rate=512.0):
    freqs = np.array([2.157, 13.52, 37.85])
    zetas = np.array([0.02, 0.004, 0.003])
    params = [OscillatorParams(a, 2 * np.pi * f, z, ph, h) for a, f, z, ph, h in
              zip([1.0, 0.3, 0.1], freqs, zetas, [0.3, -1.0, 2.0], _shapes())]
    times = np.arange(int(duration * rate)) / rate
    return MeasurementSet(times, oscillator_signal(params, times)), params


def test_oscillator_dft_matches_fft():
    n, dt = 1000, 1 / 256
    t = np.arange(n) * dt
    omega, zeta, phase = 2 * np.pi * 7.3, 0.01, 0.7
    wd = omega * np.sqrt(1 - zeta**2)
    x = np.exp(-zeta * omega * t) * np.cos(wd * t + phase)
    bins = np.arange(20, 40)
    np.testing.assert_allclose(oscillator_dft(omega, zeta, phase, bins, n, dt),
                               np.fft.rfft(x)[bins], rtol=1e-9, atol=1e-9)


def test_round_trip_recovers_modes():
    mset, truth = synthetic_set()
    obs, params, diag = identify(mset, 3)
    for got, want in zip(params, truth):
        assert abs(got.omega / want.omega - 1) < 1e-3
        assert abs(got.zeta / want.zeta - 1) < 0.05
        assert np.linalg.norm(got.shape - want.shape) < 1e-3
    assert obs.size == 24
    assert diag.residual < 1e-12 * diag.data_energy


def test_bands_are_sorted_and_disjoint():
    mset, truth = synthetic_set()
    bands = pick_bands(mset, 3)
    edges = bands.edges()
    assert all(a[1] < b[0] for a, b in zip(edges, edges[1:]))
    df = 1 / 30.0
    for (lo, hi), m in zip(edges, truth):
        assert lo * df <= m.omega / (2 * np.pi) <= hi * df


def test_too_many_modes_requested():
    times = np.arange(2048) / 512
    single = [OscillatorParams(1.0, 2 * np.pi * 5, 0.01, 0.0, np.ones(3) / np.sqrt(3))]
    mset = MeasurementSet(times, oscillator_signal(single, times))
    with pytest.raises(IdentificationError):
        pick_bands(mset, 3)
    with pytest.raises(ValueError):
        pick_bands(mset, 0)


def test_fit_from_exact_start_stays_put():
    mset, truth = synthetic_set(duration=8.0)
    params, diag = fit_modes(mset, pick_bands(mset, 3), x0=truth)
    np.testing.assert_allclose([p.omega for p in params], [m.omega for m in truth], rtol=1e-9)
