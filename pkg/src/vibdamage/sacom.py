"""Sample-based measure-theoretic inversion on a Gaussian damage family.

The observed-data density is Gaussian with mean ``m - mu`` and covariance
``Sigma``. Its data space is partitioned into Voronoi cells around
generators drawn from that density (nearest generator in whitened
coordinates); cell probabilities come from a large secondary Monte Carlo
sample. Uniform parameter samples are pushed through the forward map, binned,
and each sample receives ``p_bin / count_bin``.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from . import rng as rngmod
from .errors import NumericalError
from .modal import forward_map

PARAM_NAMES = ("A", "w", "pos")
UPPER = 1.0 - 1e-9
MIN_WIDTH = 1e-4


@dataclass(frozen=True)
class GaussianDamageParams:
    size: float
    width: float
    position: float


def damage_from_params(params, midpoints, clip=True):
    """Gaussian damage profile ``A / (w sqrt(pi)) exp(-(x - pos)^2 / w^2)``.

    ``params`` is a GaussianDamageParams or an (A, w, pos) sequence; rows of
    a 2-D array give a batch. Values above 1 - 1e-9 are clipped; the second
    return value flags whether that happened.
    """
    if isinstance(params, GaussianDamageParams):
        params = (params.size, params.width, params.position)
    p = np.asarray(params, dtype=float)
    batch = p.ndim == 2
    p = np.atleast_2d(p)
    a, w, pos = p[:, 0:1], p[:, 1:2], p[:, 2:3]
    if np.any(w <= 0):
        raise ValueError("damage width must be positive")
    x = np.asarray(midpoints)[None, :]
    d = a / (w * np.sqrt(np.pi)) * np.exp(-((x - pos) ** 2) / w**2)
    clipped = np.any(d > UPPER, axis=1)
    if clip:
        d = np.minimum(d, UPPER)
    if batch:
        return d, clipped
    return d[0], bool(clipped[0])


@dataclass
class DataDensity:
    """Gaussian observed-data density with mean ``m - mu`` and whitener S."""

    center: np.ndarray
    whitener: np.ndarray

    @classmethod
    def from_measurement(cls, measurement, noise):
        return cls(np.asarray(measurement) - noise.mean, noise.whitener)

    @property
    def dim(self):
        return self.center.size

    def whiten(self, x):
        return (np.asarray(x) - self.center) @ self.whitener.T

    def sample(self, count, rng):
        """Draws from the density (in data coordinates)."""
        z = rng.standard_normal((count, self.dim))
        return self.center + np.linalg.solve(self.whitener, z.T).T


@dataclass
class Tessellation:
    """Voronoi partition of data space in whitened coordinates."""

    density: DataDensity
    generators: np.ndarray  # whitened
    probabilities: np.ndarray
    _tree: cKDTree = field(default=None, repr=False)

    def __post_init__(self):
        self._tree = cKDTree(self.generators)

    @property
    def size(self):
        return self.generators.shape[0]

    def locate(self, x):
        """Zero-based bin index of each data point (rows of ``x``)."""
        q = self.density.whiten(np.atleast_2d(x))
        _, idx = self._tree.query(q)
        return np.asarray(idx, dtype=int)


def tessellate_data_space(density, bins=1000, seed=0, secondary=None):
    """Generators drawn from the density; probabilities by Monte Carlo."""
    if bins < 1:
        raise ValueError("need at least one bin")
    secondary = 100 * bins if secondary is None else int(secondary)
    gens = rngmod.stream(seed, "tessellation", "generators").standard_normal((bins, density.dim))
    tess = Tessellation(density, gens, np.zeros(bins))
    counts = np.zeros(bins, dtype=np.int64)
    draw = rngmod.stream(seed, "tessellation", "probabilities")
    remaining = secondary
    while remaining > 0:
        chunk = min(remaining, 200_000)
        z = draw.standard_normal((chunk, density.dim))
        _, idx = tess._tree.query(z)
        counts += np.bincount(idx, minlength=bins)
        remaining -= chunk
    tess.probabilities = counts / counts.sum()
    return tess


@dataclass
class CountingMeasure:
    samples: np.ndarray
    probabilities: np.ndarray
    bin_index: np.ndarray
    bin_probabilities: np.ndarray
    counts: np.ndarray
    failures: int = 0
    clipped: int = 0
    names: tuple = PARAM_NAMES
    ranges: tuple = None

    @property
    def total(self):
        return float(self.probabilities.sum())


def uniform_samples(ranges, count, seed):
    lo = np.array([r[0] for r in ranges], dtype=float)
    hi = np.array([r[1] for r in ranges], dtype=float)
    u = rngmod.stream(seed, "sacom", "samples").random((count, lo.size))
    return lo + u * (hi - lo)


def default_ranges(length):
    return ((0.0, 0.015), (MIN_WIDTH, 0.2), (0.0, length))


def beam_forward(system, n_modes=3):
    """Forward callable mapping (A, w, pos) rows to modal observations."""
    mid = system.config.element_midpoints()

    def forward(params):
        d, clipped = damage_from_params(params, mid)
        return forward_map(system, d, n_modes), clipped

    return forward


def _evaluate(forward, samples, dim):
    out = np.full((samples.shape[0], dim), np.nan)
    clipped = np.zeros(samples.shape[0], dtype=bool)
    for j, s in enumerate(samples):
        try:
            val = forward(s)
        except (NumericalError, ValueError, np.linalg.LinAlgError):
            continue
        if isinstance(val, tuple):
            val, clipped[j] = val
        out[j] = val
    return out, clipped


def push_forward(forward, samples, dim, threads=1, chunk=2000):
    """Evaluate ``forward`` on every row; failures become NaN rows.

    Chunks are written back by index, so the result does not depend on the
    number of worker threads.
    """
    n = samples.shape[0]
    out = np.empty((n, dim))
    clipped = np.zeros(n, dtype=bool)
    starts = list(range(0, n, chunk))

    def work(start):
        return start, _evaluate(forward, samples[start:start + chunk], dim)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(work, starts))
    else:
        results = [work(s) for s in starts]
    for start, (vals, clip) in results:
        out[start:start + vals.shape[0]] = vals
        clipped[start:start + vals.shape[0]] = clip
    return out, clipped


def run_sacom(density, ranges, count, forward, seed=0, bins=1000, tessellation=None,
              threads=1, samples=None, images=None):
    """Probability counting measure on uniform parameter samples.

    ``images`` may carry a precomputed ``(values, clipped)`` pushforward of
    ``samples``; it does not depend on the observed density, so one
    pushforward serves several measurements.
    """
    if count < 1:
        raise ValueError("need at least one sample")
    tess = tessellation or tessellate_data_space(density, bins, seed)
    if samples is None:
        samples = uniform_samples(ranges, count, seed)
    if images is None:
        images = push_forward(forward, samples, density.dim, threads)
    images, clipped = images
    ok = np.all(np.isfinite(images), axis=1)
    k = np.full(count, -1, dtype=int)
    if ok.any():
        k[ok] = tess.locate(images[ok])
    counts = np.bincount(k[ok], minlength=tess.size)
    prob = np.zeros(count)
    prob[ok] = tess.probabilities[k[ok]] / counts[k[ok]]
    return CountingMeasure(
        samples=samples,
        probabilities=prob,
        bin_index=k,
        bin_probabilities=tess.probabilities,
        counts=counts,
        failures=int((~ok).sum()),
        clipped=int(clipped.sum()),
        ranges=tuple(tuple(r) for r in ranges),
    )


def event_probability(measure, indicator):
    """Sum of cell probabilities of samples inside the event.

    ``indicator`` is a callable on the (J, 3) sample array or a mapping of
    parameter name to (lo, hi) bounds describing a box.
    """
    if callable(indicator):
        mask = np.asarray(indicator(measure.samples), dtype=bool)
    else:
        mask = np.ones(measure.samples.shape[0], dtype=bool)
        for name, (lo, hi) in indicator.items():
            col = measure.samples[:, measure.names.index(name)]
            mask &= (col >= lo) & (col <= hi)
    return float(measure.probabilities[mask].sum())


def marginal_density(measure, dims, resolution=50, ranges=None):
    """Histogram density of the counting measure over the selected parameters.

    Returns ``(edges, density)``; ``density * cell_volume`` sums to the total
    measure.
    """
    dims = [measure.names.index(d) if isinstance(d, str) else int(d) for d in dims]
    res = [resolution] * len(dims) if np.isscalar(resolution) else list(resolution)
    if min(res) < 2:
        raise ValueError("need at least two cells per dimension")
    if ranges is None:
        ranges = [measure.ranges[d] for d in dims]
    hist, edges = np.histogramdd(
        measure.samples[:, dims], bins=res, range=ranges, weights=measure.probabilities
    )
    vol = np.ones_like(hist)
    for axis, e in enumerate(edges):
        shape = [1] * len(edges)
        shape[axis] = -1
        vol = vol * np.diff(e).reshape(shape)
    return edges, hist / vol


def marginal_mode(edges, density):
    """Cell-center coordinates of the density maximum."""
    idx = np.unravel_index(np.argmax(density), density.shape)
    return tuple(0.5 * (e[i] + e[i + 1]) for e, i in zip(edges, idx))
