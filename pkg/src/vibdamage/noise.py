"""Gaussian noise model of pre-processed modal observations."""
from dataclasses import dataclass

import numpy as np

DEFAULT_JITTER = 1e-3


@dataclass
class NoiseModel:
    """Mean, covariance and a whitener ``S`` with ``S^T S = inv(cov)``."""

    mean: np.ndarray
    cov: np.ndarray
    whitener: np.ndarray

    @classmethod
    def from_moments(cls, mean, cov):
        return cls(np.asarray(mean, dtype=float), np.asarray(cov, dtype=float), whitener(cov))

    @property
    def dim(self):
        return self.mean.size


def whitener(cov):
    """Symmetric inverse square root of a covariance matrix."""
    cov = 0.5 * (np.asarray(cov) + np.asarray(cov).T)
    lam, vec = np.linalg.eigh(cov)
    if lam.min() <= 0:
        raise ValueError(f"covariance is not positive definite (min eigenvalue {lam.min():.3e})")
    return (vec / np.sqrt(lam)) @ vec.T


def estimate_noise_mean(undamaged_obs, model_prediction):
    obs = np.atleast_2d(np.asarray(undamaged_obs, dtype=float))
    pred = np.asarray(model_prediction, dtype=float)
    if obs.shape[0] < 2:
        raise ValueError("at least two undamaged observations are required")
    if obs.shape[1] != pred.size:
        raise ValueError(f"dimension mismatch: observations {obs.shape[1]}, prediction {pred.size}")
    return obs.mean(axis=0) - pred


def estimate_noise_cov(grouped_obs, jitter=DEFAULT_JITTER):
    """Average of per-group unbiased sample covariances plus diagonal jitter.

    The jitter is ``jitter * trace(C) / dim`` times the identity; with only a
    handful of repeats per group the raw average is singular. When the
    average is exactly zero the jitter falls back to ``jitter`` itself.
    """
    covs = []
    for g in grouped_obs:
        g = np.atleast_2d(np.asarray(g, dtype=float))
        if g.shape[0] < 2:
            raise ValueError("every group needs at least two observations")
        covs.append(np.cov(g, rowvar=False, ddof=1).reshape(g.shape[1], g.shape[1]))
    dims = {c.shape for c in covs}
    if len(dims) != 1:
        raise ValueError(f"groups have inconsistent dimensions {sorted(dims)}")
    cov = np.mean(covs, axis=0)
    dim = cov.shape[0]
    scale = np.trace(cov) / dim
    tau = jitter * scale if scale > 0 else jitter
    return cov + tau * np.eye(dim)


def estimate_noise(grouped_obs, model_prediction, undamaged_group=0, jitter=DEFAULT_JITTER):
    """Noise model from groups of repeated observations.

    ``grouped_obs[undamaged_group]`` must hold the intact-beam repeats; its
    mean fixes the noise mean relative to ``model_prediction``.
    """
    mean = estimate_noise_mean(grouped_obs[undamaged_group], model_prediction)
    cov = estimate_noise_cov(grouped_obs, jitter)
    return NoiseModel.from_moments(mean, cov)
