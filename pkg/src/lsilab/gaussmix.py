"""Finite Gaussian mixtures with exact log-density calculus.

Every measure in this package is a finite mixture of Gaussians.  All
densities are evaluated in log space with log-sum-exp over components,
which keeps evaluation stable even when components sit thousands of
standard deviations apart.  Covariance factorizations are computed once at
construction and cached; instances are immutable and safe to share.

Conventions: ``logpdf`` is log(dmu/dx), ``score`` its gradient,
``log_ratio`` is log(dmu/dgamma) where gamma denotes the standard Gaussian.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import logsumexp

from .errors import (
    BadWeights,
    ComponentBudgetExceeded,
    DimensionMismatch,
    NonPositiveDefiniteCovariance,
)
from .rng import as_generator

WEIGHT_SUM_TOL = 1e-9
SYMMETRY_TOL = 1e-12
PRODUCT_COMPONENT_BUDGET = 4096

LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class LocalDensityData:
    """Pointwise density data: value, gradient, Hessian of log dmu/dx.

    ``log_ratio`` is log(dmu/dgamma)(x) = log_density + |x|^2/2 + (d/2)log(2pi),
    an exact algebraic identity shared by every field here.
    """

    point: np.ndarray
    log_density: float
    score: np.ndarray
    hessian: np.ndarray
    log_ratio: float


class GaussianMixture:
    """Immutable finite mixture of nondegenerate Gaussians on R^dim."""

    __slots__ = ("dim", "weights", "means", "covs", "_chol", "_prec",
                 "_logdet", "_prec_mean")

    def __init__(self, dim, weights, means, covs):
        dim = int(dim)
        if dim < 1:
            raise DimensionMismatch(f"dim must be >= 1, got {dim}")
        weights = np.asarray(weights, dtype=float)
        means = np.asarray(means, dtype=float)
        covs = np.asarray(covs, dtype=float)
        if weights.ndim != 1 or len(weights) == 0:
            raise BadWeights("need a non-empty 1d weight vector")
        k = len(weights)
        if means.shape != (k, dim):
            raise DimensionMismatch(
                f"means shape {means.shape} incompatible with {k} components in dim {dim}")
        if covs.shape != (k, dim, dim):
            raise DimensionMismatch(
                f"covs shape {covs.shape} incompatible with {k} components in dim {dim}")
        if np.any(weights <= 0.0):
            raise BadWeights("weights must be strictly positive")
        total = weights.sum()
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise BadWeights(f"weights sum to {total!r}, more than {WEIGHT_SUM_TOL} from 1")
        weights = weights / total

        scale = max(1.0, float(np.max(np.abs(covs))))
        asym = np.max(np.abs(covs - np.transpose(covs, (0, 2, 1))))
        if asym > SYMMETRY_TOL * scale:
            raise NonPositiveDefiniteCovariance(
                f"covariance asymmetry {asym:g} exceeds tolerance")
        covs = 0.5 * (covs + np.transpose(covs, (0, 2, 1)))

        chol = np.empty_like(covs)
        prec = np.empty_like(covs)
        logdet = np.empty(k)
        eye = np.eye(dim)
        for j in range(k):
            try:
                c, low = cho_factor(covs[j], lower=True)
            except np.linalg.LinAlgError as exc:
                raise NonPositiveDefiniteCovariance(
                    f"component {j} covariance is not positive definite") from exc
            except ValueError as exc:
                raise NonPositiveDefiniteCovariance(
                    f"component {j} covariance is not finite") from exc
            L = np.tril(c)
            if np.any(np.diag(L) <= 0.0):
                raise NonPositiveDefiniteCovariance(
                    f"component {j} covariance is not positive definite")
            chol[j] = L
            prec[j] = cho_solve((c, low), eye)
            logdet[j] = 2.0 * float(np.sum(np.log(np.diag(L))))

        self_set = lambda name, value: object.__setattr__(self, name, value)
        self_set("dim", dim)
        self_set("weights", weights)
        self_set("means", means)
        self_set("covs", covs)
        self_set("_chol", chol)
        self_set("_prec", prec)
        self_set("_logdet", logdet)
        self_set("_prec_mean", np.einsum("jab,jb->ja", prec, means))
        for arr in (weights, means, covs, chol, prec, logdet):
            arr.flags.writeable = False

    def __setattr__(self, name, value):
        raise AttributeError("GaussianMixture is immutable")

    # ------------------------------------------------------------------
    # representation helpers
    # ------------------------------------------------------------------

    @property
    def n_components(self) -> int:
        return len(self.weights)

    def __repr__(self):
        return f"GaussianMixture(dim={self.dim}, n_components={self.n_components})"

    def component_logdets(self) -> np.ndarray:
        return self._logdet

    def component_precisions(self) -> np.ndarray:
        return self._prec

    def component_cholesky(self) -> np.ndarray:
        return self._chol

    # ------------------------------------------------------------------
    # density calculus (batched; X has shape (N, dim))
    # ------------------------------------------------------------------

    def _check_points(self, X):
        X = np.asarray(X, dtype=float)
        squeeze = X.ndim == 1
        if squeeze:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise DimensionMismatch(
                f"points of shape {X.shape} do not live in dim {self.dim}")
        return X, squeeze

    def _component_logpdfs(self, X):
        """Per-component Gaussian log densities, shape (N, k)."""
        n = X.shape[0]
        k = self.n_components
        out = np.empty((n, k))
        for j in range(k):
            diff = X - self.means[j]
            v = cho_solve((self._chol[j], True), diff.T).T
            maha = np.einsum("na,na->n", diff, v)
            out[:, j] = -0.5 * (self.dim * LOG_2PI + self._logdet[j] + maha)
        return out

    def logpdf(self, X):
        X, squeeze = self._check_points(X)
        lp = logsumexp(self._component_logpdfs(X) + np.log(self.weights), axis=1)
        return float(lp[0]) if squeeze else lp

    def log_ratio(self, X):
        """log(dmu/dgamma) at X; exact shift of logpdf by the Gaussian term."""
        X, squeeze = self._check_points(X)
        lp = logsumexp(self._component_logpdfs(X) + np.log(self.weights), axis=1)
        lr = lp + 0.5 * np.einsum("na,na->n", X, X) + 0.5 * self.dim * LOG_2PI
        return float(lr[0]) if squeeze else lr

    def responsibilities(self, X):
        X, _ = self._check_points(X)
        logits = self._component_logpdfs(X) + np.log(self.weights)
        logits -= logits.max(axis=1, keepdims=True)
        r = np.exp(logits)
        r /= r.sum(axis=1, keepdims=True)
        return r

    def score(self, X):
        """Gradient of log density: sum_j r_j(x) * (-P_j (x - m_j))."""
        X, squeeze = self._check_points(X)
        r = self.responsibilities(X)
        g = -(np.einsum("jab,njb->nja", self._prec, X[:, None, :] - self.means))
        s = np.einsum("nj,nja->na", r, g)
        return s[0] if squeeze else s

    def score_and_hessian(self, X):
        """Score and Hessian of log density.

        Hessian = sum_j r_j (-P_j + g_j g_j^T) - s s^T with g_j the
        per-component score and s the mixture score.
        """
        X, squeeze = self._check_points(X)
        r = self.responsibilities(X)
        g = -(np.einsum("jab,njb->nja", self._prec, X[:, None, :] - self.means))
        s = np.einsum("nj,nja->na", r, g)
        h = (np.einsum("nj,njab->nab", r, np.einsum("nja,njb->njab", g, g))
             - np.einsum("nj,jab->nab", r, self._prec)
             - np.einsum("na,nb->nab", s, s))
        if squeeze:
            return s[0], h[0]
        return s, h

    # ------------------------------------------------------------------
    # moments, sampling, transforms
    # ------------------------------------------------------------------

    def moments(self):
        """Exact mixture mean and covariance (law of total covariance)."""
        mean = self.weights @ self.means
        centered = self.means - mean
        cov = (np.einsum("j,jab->ab", self.weights, self.covs)
               + np.einsum("j,ja,jb->ab", self.weights, centered, centered))
        return mean, cov

    def second_moment(self):
        mean, cov = self.moments()
        return cov + np.outer(mean, mean)

    def sample(self, count, rng_stream):
        count = int(count)
        if count < 1:
            raise ValueError("count must be >= 1")
        rng = as_generator(rng_stream)
        inds = rng.choice(self.n_components, size=count, p=self.weights)
        z = rng.standard_normal((count, self.dim))
        out = np.empty((count, self.dim))
        for j in range(self.n_components):
            mask = inds == j
            if np.any(mask):
                out[mask] = self.means[j] + z[mask] @ self._chol[j].T
        return out

    def transform(self, matrix):
        """Exact pushforward by an invertible matrix: means Am, covs A C A^T."""
        A = np.asarray(matrix, dtype=float)
        if A.shape != (self.dim, self.dim):
            raise DimensionMismatch(f"transform matrix shape {A.shape} != ({self.dim},{self.dim})")
        means = self.means @ A.T
        covs = np.einsum("ab,jbc,dc->jad", A, self.covs, A)
        return GaussianMixture(self.dim, self.weights, means, covs)

    def translate(self, shift):
        shift = np.asarray(shift, dtype=float)
        if shift.shape != (self.dim,):
            raise DimensionMismatch("translation vector has wrong dimension")
        return GaussianMixture(self.dim, self.weights, self.means + shift, self.covs)

    # ------------------------------------------------------------------
    # JSON wire format
    # ------------------------------------------------------------------

    def to_json_obj(self):
        return {
            "dim": self.dim,
            "components": [
                {"w": float(w), "mean": m.tolist(), "cov": c.tolist()}
                for w, m, c in zip(self.weights, self.means, self.covs)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj())


def mixture_new(dim, components) -> GaussianMixture:
    """Build a validated mixture from (weight, mean, cov) triples.

    Weights within 1e-9 of summing to one are silently renormalized;
    anything further off raises BadWeights.
    """
    if not components:
        raise BadWeights("components must be non-empty")
    weights = np.array([c[0] for c in components], dtype=float)
    means = np.array([np.atleast_1d(np.asarray(c[1], dtype=float)) for c in components])
    covs = np.array([np.atleast_2d(np.asarray(c[2], dtype=float)) for c in components])
    return GaussianMixture(dim, weights, means, covs)


def gaussian(mean, cov) -> GaussianMixture:
    """Single-component mixture N(mean, cov)."""
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    return GaussianMixture(len(mean), [1.0], mean[None, :], cov[None, :, :])


def standard_gaussian(dim) -> GaussianMixture:
    return gaussian(np.zeros(dim), np.eye(dim))


def gaussian_1d(mean, var) -> GaussianMixture:
    """Convenience for the ubiquitous one-dimensional N(mean, var)."""
    return gaussian([float(mean)], [[float(var)]])


def evaluate(mixture: GaussianMixture, x) -> LocalDensityData:
    """Closed-form local density data at a single point."""
    X, _ = mixture._check_points(np.atleast_1d(np.asarray(x, dtype=float)))
    log_density = mixture.logpdf(X)[0]
    score, hessian = mixture.score_and_hessian(X)
    log_ratio = log_density + 0.5 * float(X[0] @ X[0]) + 0.5 * mixture.dim * LOG_2PI
    return LocalDensityData(point=X[0], log_density=float(log_density),
                            score=score[0], hessian=hessian[0],
                            log_ratio=float(log_ratio))


def sample(mixture: GaussianMixture, count, rng_stream):
    """I.i.d. draws from the mixture, reproducible per stream."""
    return mixture.sample(count, rng_stream)


def moments(mixture: GaussianMixture):
    return mixture.moments()


def product_measure(m1: GaussianMixture, m2: GaussianMixture) -> GaussianMixture:
    """Tensor product: Cartesian components, multiplied weights, block covs."""
    total = m1.n_components * m2.n_components
    if total > PRODUCT_COMPONENT_BUDGET:
        raise ComponentBudgetExceeded(
            f"{total} product components exceed budget {PRODUCT_COMPONENT_BUDGET}")
    dim = m1.dim + m2.dim
    weights = np.outer(m1.weights, m2.weights).ravel()
    means = np.empty((total, dim))
    covs = np.zeros((total, dim, dim))
    idx = 0
    for j1 in range(m1.n_components):
        for j2 in range(m2.n_components):
            means[idx, :m1.dim] = m1.means[j1]
            means[idx, m1.dim:] = m2.means[j2]
            covs[idx, :m1.dim, :m1.dim] = m1.covs[j1]
            covs[idx, m1.dim:, m1.dim:] = m2.covs[j2]
            idx += 1
    return GaussianMixture(dim, weights, means, covs)


def discrete_convolved_with_gaussian(points, weights, base_cov=None) -> GaussianMixture:
    """Mixture p * N(0, base_cov) for a finitely supported p."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    weights = np.asarray(weights, dtype=float)
    dim = points.shape[1]
    if base_cov is None:
        base_cov = np.eye(dim)
    covs = np.broadcast_to(np.atleast_2d(base_cov), (len(weights), dim, dim))
    return GaussianMixture(dim, weights, points, np.array(covs))


def from_json_obj(obj) -> GaussianMixture:
    """Parse the wire format {"dim": n, "components": [{"w", "mean", "cov"}]}."""
    try:
        dim = obj["dim"]
        comps = [(c["w"], c["mean"], c["cov"]) for c in obj["components"]]
    except (KeyError, TypeError) as exc:
        raise BadWeights(f"malformed mixture object: {exc}") from exc
    return mixture_new(dim, comps)


def from_json(text: str) -> GaussianMixture:
    return from_json_obj(json.loads(text))
