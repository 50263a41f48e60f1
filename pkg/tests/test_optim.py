import numpy as np

from vibdamage.optim import forward_difference_jacobian, levenberg_marquardt


def _rosenbrock(x):
    return np.array([10 * (x[1] - x[0] ** 2), 1 - x[0]])


def _rosenbrock_jac(x, r):
    return np.array([[-20 * x[0], 10.0], [-1.0, 0.0]])


def test_rosenbrock_minimum():
    res = levenberg_marquardt(_rosenbrock, [-1.2, 1.0], _rosenbrock_jac, gtol=1e-12)
    assert res.converged
    np.testing.assert_allclose(res.x, [1.0, 1.0], atol=1e-8)
    assert res.cost < 1e-20
    assert all(b <= a for a, b in zip(res.history, res.history[1:]))


def test_linear_least_squares_matches_lstsq(rng):
    a = rng.standard_normal((30, 4))
    b = rng.standard_normal(30)
    res = levenberg_marquardt(lambda x: a @ x - b, np.zeros(4), lambda x, r: a, gtol=1e-12)
    np.testing.assert_allclose(res.x, np.linalg.lstsq(a, b, rcond=None)[0], rtol=1e-8)


def test_bound_constrained_solution():
    # min (x0 + 1)^2 + (x1 - 2)^2 over x >= 0: solution (0, 2)
    lo, hi = np.zeros(2), np.full(2, np.inf)
    res = levenberg_marquardt(
        lambda x: np.array([x[0] + 1, x[1] - 2]), [1.0, 0.0], lambda x, r: np.eye(2),
        project=lambda x: np.clip(x, lo, hi), bounds=(lo, hi),
        projected_gradient=lambda x, g: x - np.clip(x - g, lo, hi), gtol=1e-12,
    )
    np.testing.assert_allclose(res.x, [0.0, 2.0], atol=1e-10)


def test_forward_difference_flips_at_upper_bound():
    f = lambda x: np.array([x[0] ** 2])
    j = forward_difference_jacobian(f, np.array([1.0]), f(np.array([1.0])), 1e-6,
                                    lower=[0.0], upper=[1.0])
    # a backward difference of x^2 at 1 gives 2 - h
    assert abs(j[0, 0] - 2.0) < 2e-6
