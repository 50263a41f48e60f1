import numpy as np
import pytest

from vibdamage.fem import BeamConfig, assemble_system
from vibdamage.noise import NoiseModel
from vibdamage.sacom import (
    DataDensity, beam_forward, damage_from_params, default_ranges, event_probability,
    marginal_density, marginal_mode, push_forward, run_sacom, tessellate_data_space,
    uniform_samples,
)

from sacom_oracles import uniform_pushforward_half


def test_damage_profile_formula():
    cfg = BeamConfig(elements=50)
    mid = cfg.element_midpoints()
    d, clipped = damage_from_params((0.015, 0.05, 0.259), mid)
    expected = 0.015 / (0.05 * np.sqrt(np.pi)) * np.exp(-((mid - 0.259) / 0.05) ** 2)
    np.testing.assert_allclose(d, expected, rtol=1e-12)
    assert np.argmax(d) == 9 and not clipped
    # a midpoint exactly at pos reaches the peak value
    d, _ = damage_from_params((0.015, 0.05, mid[9]), mid)
    assert d.max() == pytest.approx(0.015 / (0.05 * np.sqrt(np.pi)))
    assert not damage_from_params((0.0, 0.1, 0.5), mid)[0].any()
    assert damage_from_params((0.015, 0.01, 50.0), mid)[0].max() < 1e-300


def test_damage_profile_clips_and_validates():
    mid = BeamConfig(elements=50).element_midpoints()
    d, clipped = damage_from_params((0.015, 1e-4, mid[3]), mid)
    assert clipped and d.max() < 1.0
    batch, flags = damage_from_params(np.array([[0.01, 0.1, 0.2], [0.015, 1e-4, mid[3]]]), mid)
    assert batch.shape == (2, 50) and flags.tolist() == [False, True]
    with pytest.raises(ValueError):
        damage_from_params((0.01, 0.0, 0.2), mid)


def _density(dim=2):
    return DataDensity(np.zeros(dim), np.eye(dim))


def test_single_bin_tessellation():
    tess = tessellate_data_space(_density(), bins=1, seed=0, secondary=100)
    assert tess.probabilities.tolist() == [1.0]
    assert set(tess.locate(np.random.default_rng(0).standard_normal((20, 2)))) == {0}


def test_cell_probability_expectation_over_seeds():
    # a single tessellation has very uneven cells; only the expectation over
    # generator draws is 1 / I for every cell index
    probs = np.array([tessellate_data_space(_density(1), 10, seed=s, secondary=10_000).probabilities
                      for s in range(1000)])
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-14)
    np.testing.assert_allclose(probs.mean(axis=0), 0.1, atol=0.01)
    assert probs.std(axis=0).min() > 0.03


def test_constant_forward_lands_in_one_bin():
    density = _density()
    tess = tessellate_data_space(density, bins=20, seed=1, secondary=2000)
    m = run_sacom(density, [(0, 1)] * 3, 50, lambda x: np.array([0.1, -0.2]), tessellation=tess)
    k = tess.locate([[0.1, -0.2]])[0]
    assert np.all(m.bin_index == k)
    np.testing.assert_allclose(m.probabilities, tess.probabilities[k] / 50)


def test_mass_conservation_and_total():
    density = _density()
    tess = tessellate_data_space(density, bins=30, seed=2, secondary=3000)
    m = run_sacom(density, [(0, 1)] * 3, 5000, lambda x: 3 * (x[:2] - 0.5), tessellation=tess)
    for i in np.unique(m.bin_index):
        assert m.probabilities[m.bin_index == i].sum() == pytest.approx(m.bin_probabilities[i],
                                                                         rel=1e-12)
    assert m.total <= 1.0 + 1e-12
    assert event_probability(m, lambda s: np.ones(len(s), bool)) == pytest.approx(m.total)
    assert event_probability(m, lambda s: np.zeros(len(s), bool)) == 0.0
    box = {"A": (0.0, 0.5)}
    inside = event_probability(m, box)
    outside = event_probability(m, lambda s: s[:, 0] > 0.5)
    assert inside + outside == pytest.approx(m.total)


def test_failed_forward_gets_zero_probability():
    density = _density(1)
    tess = tessellate_data_space(density, bins=5, seed=0, secondary=500)

    def forward(x):
        if x[0] > 0.5:
            raise ValueError("outside")
        return np.array([x[0]])

    m = run_sacom(density, [(0, 1)], 200, forward, tessellation=tess)
    assert m.failures == np.count_nonzero(m.samples[:, 0] > 0.5)
    assert np.all(m.probabilities[m.samples[:, 0] > 0.5] == 0)


def test_uniform_pushforward_oracle():
    half, measure = uniform_pushforward_half()
    assert abs(half - 0.5) < 0.01
    assert measure.total == pytest.approx(1.0, abs=1e-12)


def test_marginal_integrates_to_total():
    density = _density()
    tess = tessellate_data_space(density, bins=30, seed=2, secondary=3000)
    m = run_sacom(density, [(0, 1), (0, 2), (0, 3)], 4000, lambda x: x[:2] - 1, tessellation=tess)
    edges, dens = marginal_density(m, ("pos", "A"), resolution=10)
    vol = np.outer(np.diff(edges[0]), np.diff(edges[1]))
    assert (dens * vol).sum() == pytest.approx(m.total, abs=1e-12)
    e1, d1 = marginal_density(m, ["w"], resolution=7)
    assert (d1 * np.diff(e1[0])).sum() == pytest.approx(m.total, abs=1e-12)
    mode = marginal_mode(edges, dens)
    assert 0 <= mode[0] <= 3 and 0 <= mode[1] <= 1
    with pytest.raises(ValueError):
        marginal_density(m, ["w"], resolution=1)


def test_pushforward_independent_of_threads():
    system = assemble_system(BeamConfig(elements=10, ei=133.0))
    forward = beam_forward(system)
    samples = uniform_samples(default_ranges(1.4), 300, seed=4)
    one, c1 = push_forward(forward, samples, 24, threads=1, chunk=50)
    four, c4 = push_forward(forward, samples, 24, threads=4, chunk=50)
    assert one.tobytes() == four.tobytes()
    np.testing.assert_array_equal(c1, c4)


def test_beam_run_is_deterministic():
    system = assemble_system(BeamConfig(elements=10, ei=133.0))
    forward = beam_forward(system)
    noise = NoiseModel.from_moments(np.zeros(24), 1e-4 * np.eye(24))
    obs, _ = forward((0.01, 0.05, 0.3))
    density = DataDensity.from_measurement(obs, noise)
    a = run_sacom(density, default_ranges(1.4), 200, forward, seed=5, bins=20)
    b = run_sacom(density, default_ranges(1.4), 200, forward, seed=5, bins=20, threads=3)
    assert a.probabilities.tobytes() == b.probabilities.tobytes()
    with pytest.raises(ValueError):
        run_sacom(density, default_ranges(1.4), 0, forward)
