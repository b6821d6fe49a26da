"""Seeded random mixture corpus for property and acceptance testing.

Two halves of equal size: generic mixtures (dims 1-3, 1-4 components,
covariance eigenvalues in [0.1, 10], means in [-5, 5]^n), and a dominated
subfamily that is exactly centered with mixture covariance strictly below
the identity, so that bounds conditioned on cov <= Id and mean 0 can be
exercised non-vacuously.
"""

from __future__ import annotations

import numpy as np

from .gaussmix import GaussianMixture
from .rng import stream


def _random_cov(rng, dim, eig_low, eig_high):
    eigs = rng.uniform(eig_low, eig_high, size=dim)
    q, _ = np.linalg.qr(rng.standard_normal((dim, dim)))
    return (q * eigs) @ q.T


def _random_mixture(rng, dim, n_comp, eig_low=0.1, eig_high=10.0, mean_scale=5.0):
    weights = rng.dirichlet(np.ones(n_comp) * 2.0)
    weights = np.maximum(weights, 0.02)
    weights /= weights.sum()
    means = rng.uniform(-mean_scale, mean_scale, size=(n_comp, dim))
    covs = np.array([_random_cov(rng, dim, eig_low, eig_high) for _ in range(n_comp)])
    return GaussianMixture(dim, weights, means, covs)


def _dominated_mixture(rng, dim, n_comp):
    """Centered mixture with covariance strictly dominated by the identity."""
    mix = _random_mixture(rng, dim, n_comp, eig_low=0.1, eig_high=1.0, mean_scale=1.0)
    mean, cov = mix.moments()
    means = mix.means - mean
    top = np.linalg.eigvalsh(cov).max()
    # scale so the largest covariance eigenvalue lands in (0, 0.95]
    alpha = np.sqrt(rng.uniform(0.4, 0.95) / top)
    alpha = min(alpha, 1.0)
    return GaussianMixture(dim, mix.weights, alpha * means, alpha * alpha * mix.covs)


def random_corpus(seed: int, count: int = 200) -> list[GaussianMixture]:
    """Deterministic corpus of ``count`` mixtures; first half generic,
    second half centered with covariance below the identity."""
    rng = stream(seed, "corpus")
    out = []
    half = count // 2
    for i in range(count):
        dim = 1 + i % 3
        n_comp = 1 + (i // 3) % 4
        if i < half:
            out.append(_random_mixture(rng, dim, n_comp))
        else:
            out.append(_dominated_mixture(rng, dim, n_comp))
    return out


def dominated_subset(corpus: list[GaussianMixture], tol: float = 1e-9):
    """Members with mean 0 and covariance below the identity (within tol)."""
    picked = []
    for mix in corpus:
        mean, cov = mix.moments()
        if np.max(np.abs(mean)) <= tol and np.linalg.eigvalsh(cov).max() <= 1.0 + tol:
            picked.append(mix)
    return picked
