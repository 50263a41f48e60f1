import numpy as np
import pytest

from vibdamage.fem import BeamConfig, assemble_system
from vibdamage.modal import forward_map
from vibdamage.noise import NoiseModel
from vibdamage.regularize import (
    UPPER, MapProblem, lambda_sweep, map_jacobian, map_objective, project,
    reconstruction_statistics, solve_map,
)

_SYS = assemble_system(BeamConfig(elements=10, ei=133.0))


def _noise(scale=1e-4, dim=24):
    return NoiseModel.from_moments(np.zeros(dim), scale**2 * np.eye(dim))


def _problem(d_true, lam=10.0, **kw):
    return MapProblem(_SYS, forward_map(_SYS, d_true), _noise(), lam, **kw)


def test_objective_at_truth_is_prior_term():
    d = np.zeros(10)
    d[3] = 0.3
    p = _problem(d, lam=0.5)
    assert map_objective(d, p) == pytest.approx(0.3**2 / 0.25, rel=1e-9)
    assert map_objective(np.full(10, -0.1), p) == np.inf
    assert map_objective(np.full(10, 1.0), p) == np.inf


def test_jacobian_matches_central_differences():
    d = np.linspace(0.05, 0.4, 10)
    p = _problem(np.zeros(10))
    j = map_jacobian(d, p)
    h = 1e-5
    central = np.array([(p.whitened_forward(d + h * e) - p.whitened_forward(d - h * e)) / (2 * h)
                        for e in np.eye(10)]).T
    np.testing.assert_allclose(j, central, rtol=1e-3, atol=1e-3 * np.abs(central).max())


def test_noiseless_single_element_damage_is_recovered():
    d = np.zeros(10)
    d[2] = 0.3
    res = solve_map(_problem(d, lam=100.0))
    assert res.converged
    assert np.argmax(res.d) == 2
    np.testing.assert_allclose(res.d, d, atol=1e-3)


def test_undamaged_data_gives_zero():
    res = solve_map(_problem(np.zeros(10)))
    assert np.max(res.d) < 1e-8
    assert len(res.active_bounds) == 10


def test_smaller_lambda_shrinks_estimate():
    d = np.zeros(10)
    d[5] = 0.4
    p = MapProblem(_SYS, forward_map(_SYS, d), _noise(1e-2), 1.0)
    norms = [np.linalg.norm(r.d) for r in lambda_sweep(p, [1.0, 0.1, 0.01])]
    assert norms[0] > norms[1] > norms[2]


def test_project_and_statistics():
    np.testing.assert_array_equal(project([-1.0, 0.5, 2.0]), [0.0, 0.5, UPPER])
    stats = reconstruction_statistics([[0.0, 1.0], [0.5, 0.0]])
    np.testing.assert_array_equal(stats["min"], [0.0, 0.0])
    np.testing.assert_array_equal(stats["mean"], [0.25, 0.5])
    np.testing.assert_array_equal(stats["max"], [0.5, 1.0])


def test_problem_validation():
    with pytest.raises(ValueError):
        MapProblem(_SYS, np.zeros(23), _noise())
    with pytest.raises(ValueError):
        MapProblem(_SYS, np.zeros(24), _noise(), lam=0.0)


def test_solution_is_stationary():
    # the objective's Hessian is ~1e10 here, so stationarity is judged by the
    # Gauss-Newton step on the free set rather than by the raw gradient
    d = np.zeros(10)
    d[4], d[5] = 0.2, 0.1
    noisy = forward_map(_SYS, d) + 1e-4 * np.random.default_rng(3).standard_normal(24)
    p = MapProblem(_SYS, noisy, _noise(), 0.5)
    res = solve_map(p)
    free = res.d > 0
    jac = np.vstack([-map_jacobian(res.d, p), np.eye(10) / p.lam])
    r = p.residual(res.d)
    step = np.linalg.solve(jac[:, free].T @ jac[:, free], -(jac[:, free].T @ r))
    assert np.linalg.norm(step) < 1e-8
    # active bounds: the objective rises when moving into the feasible set
    for i in np.flatnonzero(~free):
        e = np.zeros(10)
        e[i] = 1e-6
        assert map_objective(res.d + e, p) > res.objective
