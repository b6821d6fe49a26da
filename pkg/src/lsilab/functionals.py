"""Entropy, Fisher information and deficit functionals for mixtures.

For a mixture mu and the standard Gaussian gamma this module computes

    H(mu|gamma)   relative entropy, integral of log(dmu/dgamma) dmu
    I(mu|gamma)   relative Fisher information, integral of |score + x|^2 dmu
    FI matrices   integral of s (x) s dmu against Lebesgue or Gaussian scores
    deficit       (1/2) I(mu|gamma) - H(mu|gamma)  (nonnegative, zero only
                  for translates of gamma)

Closed forms are exact for single Gaussians.  Mixture estimators come in
two independent flavours so they can cross-check each other: deterministic
quadrature in dimensions one and two (adaptive Gauss-Hermite rules centred
on each component), and exact-sampling Monte Carlo above that.  Every
estimate carries an absolute error bound / standard error and a method tag.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.special import roots_hermitenorm

from .errors import BudgetExceeded, NonPositiveDefiniteCovariance
from .gaussmix import LOG_2PI, GaussianMixture
from .rng import DEFAULT_SEED, stream

CLOSED_FORM = "closed_form"
QUADRATURE = "quadrature"
MONTE_CARLO = "monte_carlo"

# Orders tried by the adaptive per-component Gauss-Hermite rule (2d).
_GH_ORDERS_2D = (16, 24, 32, 48, 64, 96, 128, 192, 256)
# Component boxes reach this many standard deviations; Gaussian mass
# beyond it is ~1e-15, below every tolerance in use.
_BOX_SIGMAS = 8.0


@dataclass(frozen=True)
class Estimate:
    """A numerical value with an absolute error bound and a method tag."""

    value: float
    abs_error: float
    method: str
    n: int = 0

    def __post_init__(self):
        if self.abs_error < 0:
            raise ValueError("abs_error must be nonnegative")
        if self.method == CLOSED_FORM and self.abs_error != 0.0:
            raise ValueError("closed-form estimates carry zero error")

    def to_json_obj(self):
        return {"value": self.value, "abs_error": self.abs_error,
                "method": self.method, "n": self.n}


@dataclass(frozen=True)
class MatrixEstimate:
    """Symmetric-matrix estimate with an entrywise absolute error bound."""

    value: np.ndarray
    abs_error: float
    method: str
    n: int = 0

    def trace_estimate(self) -> Estimate:
        d = self.value.shape[0]
        return Estimate(float(np.trace(self.value)), d * self.abs_error,
                        self.method, self.n)

    def to_json_obj(self):
        return {"value": self.value.tolist(), "abs_error": self.abs_error,
                "method": self.method, "n": self.n}


@dataclass(frozen=True)
class DeficitEstimate(Estimate):
    """Deficit value together with its two constituents."""

    entropy: Estimate = None
    fisher_trace: Estimate = None

    def to_json_obj(self):
        obj = super().to_json_obj()
        obj["entropy"] = self.entropy.to_json_obj()
        obj["fisher_trace"] = self.fisher_trace.to_json_obj()
        return obj


@dataclass(frozen=True)
class Budget:
    """Resource limits and stream identity for the estimators."""

    quad_tol: float = 1e-8
    mc_samples: int = 1_000_000
    mc_chunk: int = 1 << 16
    seed: int = DEFAULT_SEED
    stream: int = 0

    def with_(self, **kw) -> "Budget":
        data = {f: getattr(self, f) for f in ("quad_tol", "mc_samples", "mc_chunk", "seed", "stream")}
        data.update(kw)
        return Budget(**data)


DEFAULT_BUDGET = Budget()


# ----------------------------------------------------------------------
# closed forms for single Gaussians
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianClosedForms:
    h_gamma: float
    i_gamma: float
    h_leb: float
    fisher_leb: np.ndarray
    deficit: float


def gaussian_closed_forms(mean, cov) -> GaussianClosedForms:
    """Exact functionals of a single Gaussian N(mean, cov).

    With eigenvalues s_i of cov and |m| the mean norm:
      H(mu|gamma)   = (1/2) sum(s_i - 1 - log s_i) + |m|^2/2
      I(mu|gamma)   = sum (s_i - 1)^2 / s_i + |m|^2
      H(mu|Leb)     = -(d/2) log(2 pi e) - (1/2) sum log s_i
      FI(mu|Leb)    = cov^{-1}
      deficit       = (1/2) sum (1/s_i - 1 + log s_i)
    """
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    d = len(mean)
    s = np.linalg.eigvalsh(cov)
    if np.any(s <= 0):
        raise NonPositiveDefiniteCovariance("covariance must be positive definite")
    logs = np.log(s)
    msq = float(mean @ mean)
    h_gamma = 0.5 * float(np.sum(s - 1.0 - logs)) + 0.5 * msq
    i_gamma = float(np.sum((s - 1.0) ** 2 / s)) + msq
    h_leb = -0.5 * d * (LOG_2PI + 1.0) - 0.5 * float(np.sum(logs))
    fisher_leb = np.linalg.inv(cov)
    fisher_leb = 0.5 * (fisher_leb + fisher_leb.T)
    deficit_val = 0.5 * float(np.sum(1.0 / s - 1.0 + logs))
    return GaussianClosedForms(h_gamma, i_gamma, h_leb, fisher_leb, deficit_val)


def lebesgue_entropy_of_standard_gaussian(dim: int) -> float:
    """H(gamma | Lebesgue) = -(d/2) log(2 pi e)."""
    return -0.5 * dim * (LOG_2PI + 1.0)


# ----------------------------------------------------------------------
# quadrature engines
# ----------------------------------------------------------------------

@lru_cache(maxsize=32)
def _gh_rule(order: int):
    u, w = roots_hermitenorm(order)
    return u, w / np.sqrt(2.0 * np.pi)


def _merged_component_intervals(mix: GaussianMixture) -> list[tuple[float, float]]:
    sd = np.sqrt(mix.covs[:, 0, 0])
    lo = mix.means[:, 0] - _BOX_SIGMAS * sd
    hi = mix.means[:, 0] + _BOX_SIGMAS * sd
    spans = sorted(zip(lo, hi))
    merged = [list(spans[0])]
    for a, b in spans[1:]:
        if a <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], b)
        else:
            merged.append([a, b])
    return [(float(a), float(b)) for a, b in merged]


def _quad_intervals_1d(mix, integrand, tol):
    """Adaptive quadrature of g * density over merged component boxes."""
    intervals = _merged_component_intervals(mix)
    per_tol = tol / (2.0 * len(intervals))

    def f(x):
        X = np.array([[x]])
        vals = np.asarray(integrand(X), dtype=float).reshape(-1)
        return vals * float(np.exp(mix.logpdf(X)))

    total = None
    err_total = 0.0
    nodes = 0
    for a, b in intervals:
        res, err, info = integrate.quad_vec(f, a, b, epsabs=per_tol, epsrel=1e-13,
                                            limit=300, full_output=True)
        total = res if total is None else total + res
        err_total += float(err)
        nodes += int(info.neval)
    if err_total > tol:
        raise BudgetExceeded(
            f"interval quadrature error {err_total:g} above tol={tol:g}")
    return np.atleast_1d(total), err_total, nodes


def _gh_ladder_2d(mix, integrand, tol):
    """Per-component tensor Gauss-Hermite with order escalation."""
    prev = None
    nodes_used = 0
    for order in _GH_ORDERS_2D:
        u, w = _gh_rule(order)
        uu = np.stack(np.meshgrid(u, u, indexing="ij"), axis=-1).reshape(-1, 2)
        ww = np.outer(w, w).ravel()
        total = None
        for j in range(mix.n_components):
            X = mix.means[j] + uu @ mix.component_cholesky()[j].T
            vals = np.atleast_2d(np.asarray(integrand(X), dtype=float))
            if vals.shape[0] != X.shape[0]:
                vals = vals.T
            contrib = mix.weights[j] * (ww @ vals)
            total = contrib if total is None else total + contrib
            nodes_used += len(ww)
        if prev is not None:
            err = float(np.max(np.abs(total - prev)))
            if err <= tol:
                return total, err, nodes_used
        prev = total
    raise BudgetExceeded(
        f"quadrature did not reach tol={tol:g} within order {_GH_ORDERS_2D[-1]}")


def mixture_expectation_quad(mix: GaussianMixture, integrand, tol: float
                             ) -> tuple[np.ndarray, float, int]:
    """E_mu[g] for a batch integrand by deterministic quadrature.

    ``integrand(X)`` maps (N, dim) points to (N, m) values.  In one
    dimension the expectation is integrated adaptively over the union of
    component boxes (mean +- 8 standard deviations, overlaps merged), which
    stays robust for components thousands of deviations apart.  In two
    dimensions it decomposes as sum_j w_j E_{N(m_j,C_j)}[g] with a tensor
    Gauss-Hermite rule per component whose order escalates until successive
    values agree within ``tol``.  Returns (values, error bound, node
    count); raises BudgetExceeded when the tolerance is unreachable.
    """
    if mix.dim == 1:
        return _quad_intervals_1d(mix, integrand, tol)
    if mix.dim == 2:
        return _gh_ladder_2d(mix, integrand, tol)
    raise ValueError("quadrature engine only supports dim <= 2")


# ----------------------------------------------------------------------
# Monte Carlo engine: exact mixture sampling, fixed chunk order
# ----------------------------------------------------------------------

def mixture_expectation_mc(mix: GaussianMixture, integrand, budget: Budget
                           ) -> tuple[np.ndarray, np.ndarray, int]:
    """E_mu[g] by averaging over exact samples of mu.

    Sampling never importance-weights against gamma; components of the
    test families sit too far apart for that.  Chunks are accumulated in a
    fixed order so a given (seed, stream) is bit-reproducible.

    Returns (mean, stderr, n) with per-column standard errors.
    """
    rng = stream(budget.seed, "mc", budget.stream)
    n_total = int(budget.mc_samples)
    chunk = int(budget.mc_chunk)
    total = None
    total_sq = None
    done = 0
    while done < n_total:
        take = min(chunk, n_total - done)
        X = mix.sample(take, rng)
        vals = np.atleast_2d(np.asarray(integrand(X), dtype=float))
        if vals.shape[0] != X.shape[0]:
            vals = vals.T
        s = vals.sum(axis=0)
        s2 = (vals * vals).sum(axis=0)
        total = s if total is None else total + s
        total_sq = s2 if total_sq is None else total_sq + s2
        done += take
    mean = total / n_total
    var = np.maximum(total_sq / n_total - mean ** 2, 0.0)
    stderr = np.sqrt(var / n_total)
    return mean, stderr, n_total


# ----------------------------------------------------------------------
# integrands; Monte-Carlo paths use a moment-matched Gaussian baseline
# as a control variate, so estimates collapse to closed forms when the
# target is (close to) a single Gaussian
# ----------------------------------------------------------------------

class _MatchedGaussian:
    """Gaussian with the mixture's exact mean and covariance."""

    def __init__(self, mix: GaussianMixture):
        self.mean, self.cov = mix.moments()
        self.dim = mix.dim
        L = np.linalg.cholesky(self.cov)
        self.chol = L
        self.logdet = 2.0 * float(np.sum(np.log(np.diag(L))))
        self.prec = np.linalg.inv(self.cov)
        self.prec = 0.5 * (self.prec + self.prec.T)

    def logpdf(self, X):
        diff = X - self.mean
        y = np.linalg.solve(self.chol, diff.T)
        maha = np.einsum("ap,ap->p", y, y)
        return -0.5 * (self.dim * LOG_2PI + self.logdet + maha)

    def score(self, X):
        return -(X - self.mean) @ self.prec

    def entropy_rel_gaussian_closed(self) -> float:
        # E_mu[log d nu / d gamma] for nu matched to mu's moments
        return 0.5 * (float(np.trace(self.cov)) + float(self.mean @ self.mean)
                      - self.dim - self.logdet)

    def fisher_closed(self, gaussian_reference: bool) -> np.ndarray:
        # E_mu[s_cv (x) s_cv] (Lebesgue) or E_mu[(s_cv + x) (x) (s_cv + x)]
        if not gaussian_reference:
            return self.prec.copy()
        eye = np.eye(self.dim)
        M = self.cov - 2.0 * eye + self.prec + np.outer(self.mean, self.mean)
        return 0.5 * (M + M.T)


def _log_ratio_integrand(mix, baseline: _MatchedGaussian | None = None):
    if baseline is None:
        def g(X):
            return mix.log_ratio(X)[:, None]
    else:
        def g(X):
            return (mix.logpdf(X) - baseline.logpdf(X))[:, None]
    return g


def _score_outer_integrand(mix, gaussian_reference: bool,
                           baseline: _MatchedGaussian | None = None):
    d = mix.dim

    def g(X):
        s = mix.score(X)
        if gaussian_reference:
            s = s + X
        out = np.einsum("na,nb->nab", s, s)
        if baseline is not None:
            sb = baseline.score(X)
            if gaussian_reference:
                sb = sb + X
            out = out - np.einsum("na,nb->nab", sb, sb)
        return out.reshape(len(X), d * d)
    return g


def _score_sq_integrand(mix, gaussian_reference: bool,
                        baseline: _MatchedGaussian | None = None):
    def g(X):
        s = mix.score(X)
        if gaussian_reference:
            s = s + X
        out = np.einsum("na,na->n", s, s)
        if baseline is not None:
            sb = baseline.score(X)
            if gaussian_reference:
                sb = sb + X
            out = out - np.einsum("na,na->n", sb, sb)
        return out[:, None]
    return g


def _neg_hessian_integrand(mix):
    d = mix.dim
    def g(X):
        _, h = mix.score_and_hessian(X)
        return (-h).reshape(len(X), d * d)
    return g


# ----------------------------------------------------------------------
# public operations
# ----------------------------------------------------------------------

def entropy_rel_gaussian(mix: GaussianMixture, budget: Budget = DEFAULT_BUDGET) -> Estimate:
    """H(mu|gamma): quadrature in dim <= 2, Monte Carlo above.

    The MC path averages the log-density gap to a moment-matched Gaussian
    whose contribution is closed-form, so the variance vanishes as the
    target approaches a single Gaussian.
    """
    if mix.dim <= 2:
        val, err, n = mixture_expectation_quad(mix, _log_ratio_integrand(mix), budget.quad_tol)
        return Estimate(float(val[0]), err, QUADRATURE, n)
    base = _MatchedGaussian(mix)
    mean, se, n = mixture_expectation_mc(mix, _log_ratio_integrand(mix, base), budget)
    return Estimate(base.entropy_rel_gaussian_closed() + float(mean[0]),
                    float(se[0]), MONTE_CARLO, n)


def entropy_gap_lebesgue(mix: GaussianMixture, budget: Budget = DEFAULT_BUDGET) -> Estimate:
    """H(mu|Leb) - H(gamma|Leb) via the exact identity
    H(mu|Leb) - H(gamma|Leb) = H(mu|gamma) - E_mu|x|^2/2 + d/2,
    with the second moment in closed form."""
    h = entropy_rel_gaussian(mix, budget)
    mean, cov = mix.moments()
    second = float(np.trace(cov) + mean @ mean)
    return Estimate(h.value - 0.5 * second + 0.5 * mix.dim, h.abs_error, h.method, h.n)


def fisher_matrix(mix: GaussianMixture, reference: str = "lebesgue",
                  budget: Budget = DEFAULT_BUDGET) -> MatrixEstimate:
    """Fisher information matrix against Lebesgue or Gaussian reference.

    Lebesgue mode integrates score (x) score; Gaussian mode integrates
    (score + x) (x) (score + x).  The trace is the scalar Fisher
    information against the same reference.
    """
    if reference not in ("lebesgue", "gaussian"):
        raise ValueError(f"unknown reference {reference!r}")
    gaussian_ref = reference == "gaussian"
    d = mix.dim
    if d <= 2:
        integrand = _score_outer_integrand(mix, gaussian_ref)
        val, err, n = mixture_expectation_quad(mix, integrand, budget.quad_tol)
        M = val.reshape(d, d)
        M = 0.5 * (M + M.T)
        return MatrixEstimate(M, err, QUADRATURE, n)
    base = _MatchedGaussian(mix)
    integrand = _score_outer_integrand(mix, gaussian_ref, base)
    mean, se, n = mixture_expectation_mc(mix, integrand, budget)
    M = base.fisher_closed(gaussian_ref) + mean.reshape(d, d)
    M = 0.5 * (M + M.T)
    return MatrixEstimate(M, float(se.max()), MONTE_CARLO, n)


def fisher_trace(mix: GaussianMixture, reference: str = "lebesgue",
                 budget: Budget = DEFAULT_BUDGET) -> Estimate:
    """Scalar Fisher information; independent scalar-integrand estimator."""
    if reference not in ("lebesgue", "gaussian"):
        raise ValueError(f"unknown reference {reference!r}")
    gaussian_ref = reference == "gaussian"
    if mix.dim <= 2:
        integrand = _score_sq_integrand(mix, gaussian_ref)
        val, err, n = mixture_expectation_quad(mix, integrand, budget.quad_tol)
        return Estimate(float(val[0]), err, QUADRATURE, n)
    base = _MatchedGaussian(mix)
    integrand = _score_sq_integrand(mix, gaussian_ref, base)
    mean, se, n = mixture_expectation_mc(mix, integrand, budget)
    closed = float(np.trace(base.fisher_closed(gaussian_ref)))
    return Estimate(closed + float(mean[0]), float(se[0]), MONTE_CARLO, n)


def neg_mean_hessian(mix: GaussianMixture, budget: Budget = DEFAULT_BUDGET) -> MatrixEstimate:
    """-E_mu[Hessian log density]; equals the Lebesgue Fisher matrix."""
    d = mix.dim
    integrand = _neg_hessian_integrand(mix)
    if d <= 2:
        val, err, n = mixture_expectation_quad(mix, integrand, budget.quad_tol)
        M = val.reshape(d, d)
        return MatrixEstimate(0.5 * (M + M.T), err, QUADRATURE, n)
    mean, se, n = mixture_expectation_mc(mix, integrand, budget)
    M = mean.reshape(d, d)
    return MatrixEstimate(0.5 * (M + M.T), float(se.max()), MONTE_CARLO, n)


def deficit(mix: GaussianMixture, budget: Budget = DEFAULT_BUDGET) -> DeficitEstimate:
    """(1/2) I(mu|gamma) - H(mu|gamma), errors combined in quadrature.

    The error bound includes a floating-point cancellation floor since both
    constituents can dwarf their difference.
    """
    h = entropy_rel_gaussian(mix, budget)
    i = fisher_trace(mix, "gaussian", budget)
    value = 0.5 * i.value - h.value
    err = float(np.hypot(0.5 * i.abs_error, h.abs_error))
    err += 4.0 * np.finfo(float).eps * (abs(h.value) + 0.5 * abs(i.value))
    method = MONTE_CARLO if MONTE_CARLO in (h.method, i.method) else QUADRATURE
    return DeficitEstimate(value, err, method, max(h.n, i.n), entropy=h, fisher_trace=i)


def integration_by_parts_check(mix: GaussianMixture, budget: Budget = DEFAULT_BUDGET):
    """Check FI(mu|Leb) - Id = FI(mu|gamma) + Id - E_mu[x (x) x] entrywise.

    Both sides are estimated independently; the report carries the maximal
    entry discrepancy.
    """
    from .bounds import BoundReport  # local import to avoid a module cycle

    d = mix.dim
    fl = fisher_matrix(mix, "lebesgue", budget)
    fg = fisher_matrix(mix, "gaussian", budget.with_(stream=budget.stream + 1))
    second = mix.second_moment()
    lhs_mat = fl.value - np.eye(d)
    rhs_mat = fg.value + np.eye(d) - second
    disc = float(np.max(np.abs(lhs_mat - rhs_mat)))
    combined = fl.abs_error + fg.abs_error
    method = MONTE_CARLO if MONTE_CARLO in (fl.method, fg.method) else QUADRATURE
    allowance = 3.0 * combined if method == MONTE_CARLO else combined + 1e-10
    return BoundReport.build(
        name="integration_by_parts",
        lhs=Estimate(disc, 0.0, method, fl.n),
        rhs=Estimate(allowance, 0.0, method, fg.n),
        direction="lhs<=rhs",
        notes="max-entry discrepancy of the score identity vs combined-error allowance",
    )
