import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from vibdamage.errors import UnobservableModeError
from vibdamage.fem import BeamConfig, assemble_system, damaged_stiffness
from vibdamage.modal import (
    forward_map, frequency_index, normalize_observable, solve_modes, split_observation,
    stack_observation,
)

from conftest import cantilever_frequencies


def test_modes_match_dense_generalized_solver(small_system):
    d = np.linspace(0, 0.5, 10)
    omega, shapes = solve_modes(small_system, d, 4)
    lam = scipy.linalg.eigh(damaged_stiffness(small_system, d), small_system.mass,
                            eigvals_only=True)[:4]
    np.testing.assert_allclose(omega**2, lam, rtol=1e-9)
    gram = shapes.T @ small_system.mass @ shapes
    np.testing.assert_allclose(gram, np.eye(4), atol=1e-10)


def test_forward_map_layout(system50):
    obs = forward_map(system50, np.zeros(50))
    assert obs.size == 24
    idx = frequency_index(3, 7)
    np.testing.assert_array_equal(idx, [0, 8, 16])
    omega, shapes = split_observation(obs, 3)
    np.testing.assert_allclose(np.linalg.norm(shapes, axis=1), 1.0)
    assert np.all(shapes[:, -1] >= 0)
    assert np.all(np.diff(omega) > 0)
    np.testing.assert_allclose(stack_observation(omega, shapes), obs)


def test_frequencies_scale_with_sqrt_ei(system50):
    base = forward_map(system50, np.zeros(50))
    scaled = forward_map(system50, np.zeros(50), ei_scale=4.0)
    idx = frequency_index(3, 7)
    np.testing.assert_allclose(scaled[idx], 2 * base[idx], rtol=1e-12)
    mask = np.ones(24, bool)
    mask[idx] = False
    np.testing.assert_allclose(scaled[mask], base[mask], atol=1e-10)


def test_uniform_damage_equals_ei_reduction(system50):
    a = forward_map(system50, np.full(50, 0.19))
    b = forward_map(system50, np.zeros(50), ei_scale=0.81)
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-12)


def test_first_frequency_analytic(nominal_system):
    obs = forward_map(nominal_system, np.zeros(100))
    expected = cantilever_frequencies(nominal_system.config)
    np.testing.assert_allclose(obs[frequency_index(3, 7)] / (2 * np.pi), expected, rtol=5e-3)


def test_unobservable_shape_raises(small_system):
    with pytest.raises(UnobservableModeError):
        normalize_observable(np.zeros(small_system.ndof), small_system)


def test_mode_count_validation(small_system):
    with pytest.raises(ValueError):
        solve_modes(small_system, np.zeros(10), 0)
    with pytest.raises(ValueError):
        solve_modes(small_system, np.zeros(10), 21)


_SYS10 = assemble_system(BeamConfig(elements=10))


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(0.0, 0.9), min_size=10, max_size=10), st.integers(0, 9))
def test_frequencies_non_increasing_in_damage(d, i):
    d = np.array(d)
    idx = frequency_index(3, 7)
    base = forward_map(_SYS10, d)[idx]
    d2 = d.copy()
    d2[i] = min(d[i] + 0.05, 0.95)
    assert np.all(forward_map(_SYS10, d2)[idx] <= base * (1 + 1e-12))
