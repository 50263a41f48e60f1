"""Shared SACOM oracle constructions for the unit and acceptance tests."""
import numpy as np

from vibdamage.sacom import DataDensity, Tessellation, run_sacom


def uniform_tessellation(bins, secondary, seed):
    """Voronoi cells of [0, 1] with uniform generators and uniform cell mass."""
    rng = np.random.default_rng(seed)
    density = DataDensity(np.zeros(1), np.eye(1))
    tess = Tessellation(density, rng.random((bins, 1)), np.zeros(bins))
    _, idx = tess._tree.query(rng.random((secondary, 1)))
    counts = np.bincount(idx, minlength=bins)
    tess.probabilities = counts / counts.sum()
    return tess


def uniform_pushforward_half(count=100_000, bins=1000, seed=0):
    """P([0, 0.5]) for domain [0, 1], f(x) = x and uniform observed density."""
    tess = uniform_tessellation(bins, 100 * bins, seed)
    measure = run_sacom(tess.density, [(0.0, 1.0)], count, lambda x: np.asarray(x, float),
                        seed=seed, tessellation=tess)
    return float(measure.probabilities[measure.samples[:, 0] <= 0.5].sum()), measure
