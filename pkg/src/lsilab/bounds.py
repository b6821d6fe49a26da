"""Inequality evaluation: both sides of every deficit bound, as reports.

Each check computes the two sides of one inequality with independent
estimates, then issues a BoundReport.  The verdict rule is uniform: the
inequality "holds" when the slack (taken in the inequality's canonical
direction) is at least minus the sum of the two absolute errors, so
Monte-Carlo noise cannot raise false alarms while genuine violations still
surface.  The scalar helper Delta(t) = t - log(1+t) appears throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, SingularFisherMatrix
from .functionals import (
    CLOSED_FORM,
    DEFAULT_BUDGET,
    MONTE_CARLO,
    QUADRATURE,
    Budget,
    Estimate,
    deficit,
    entropy_gap_lebesgue,
    entropy_rel_gaussian,
    fisher_matrix,
    fisher_trace,
    gaussian_closed_forms,
)
from .gaussmix import GaussianMixture, discrete_convolved_with_gaussian, mixture_new
from .rng import stream

# Eigenvalue tolerance when verifying semidefiniteness preconditions on
# estimated matrices; symmetric estimation noise sits below this.
SEMIDEFINITE_TOL = 1e-9

# The quartic Wasserstein lower bound has an unspecified universal
# constant; this default is a config knob, not a derived value.
DEFAULT_WASSERSTEIN_CONSTANT = 0.01


def closed(value: float) -> Estimate:
    return Estimate(float(value), 0.0, CLOSED_FORM)


@dataclass
class BoundReport:
    """One inequality instance with provenance of both sides.

    ``direction`` is "lhs<=rhs" or "lhs>=rhs"; ``slack`` is the margin in
    that direction (nonnegative iff the inequality is satisfied by the
    point estimates) and ``holds`` allows the combined absolute errors.
    """

    name: str
    lhs: Estimate
    rhs: Estimate
    direction: str
    slack: float
    holds: bool
    preconditions_met: bool = True
    notes: str = ""

    @classmethod
    def build(cls, name, lhs, rhs, direction, preconditions_met=True, notes=""):
        if direction not in ("lhs<=rhs", "lhs>=rhs"):
            raise ValueError(f"bad direction {direction!r}")
        slack = (rhs.value - lhs.value) if direction == "lhs<=rhs" else (lhs.value - rhs.value)
        holds = bool(slack >= -(lhs.abs_error + rhs.abs_error))
        return cls(name=name, lhs=lhs, rhs=rhs, direction=direction,
                   slack=float(slack), holds=holds,
                   preconditions_met=preconditions_met, notes=notes)

    @property
    def combined_error(self) -> float:
        return self.lhs.abs_error + self.rhs.abs_error

    def to_json_obj(self):
        return {
            "name": self.name,
            "lhs": self.lhs.to_json_obj(),
            "rhs": self.rhs.to_json_obj(),
            "direction": self.direction,
            "slack": self.slack,
            "holds": self.holds,
            "preconditions_met": self.preconditions_met,
            "notes": self.notes,
        }

    def to_csv_row(self):
        return [self.name, self.lhs.value, self.rhs.value, self.slack,
                self.holds, self.preconditions_met]


CSV_COLUMNS = ["name", "lhs", "rhs", "slack", "holds", "preconditions_met"]


@dataclass(frozen=True)
class SpectralData:
    """Eigenvalues (descending) and orthonormal eigenvectors of a symmetric matrix."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    source: str

    @classmethod
    def from_matrix(cls, M, source: str) -> "SpectralData":
        M = np.asarray(M, dtype=float)
        vals, vecs = np.linalg.eigh(0.5 * (M + M.T))
        order = np.argsort(vals)[::-1]
        return cls(eigenvalues=vals[order], eigenvectors=vecs[:, order], source=source)

    def reconstruct(self) -> np.ndarray:
        return (self.eigenvectors * self.eigenvalues) @ self.eigenvectors.T


# ----------------------------------------------------------------------
# scalar helpers
# ----------------------------------------------------------------------

def delta_fn(t: float) -> float:
    """Delta(t) = t - log(1+t), the convex gap of the logarithm at 1.

    Uses a short series below |t| = 1e-4 where the direct difference loses
    to cancellation.
    """
    t = float(t)
    if t <= -1.0:
        raise DomainError(f"delta_fn requires t > -1, got {t}")
    if abs(t) < 1e-4:
        return t * t / 2.0 - t ** 3 / 3.0 + t ** 4 / 4.0
    return t - float(np.log1p(t))


def mixing_entropy(t: float) -> float:
    """phi(t) = t log t + (1-t) log(1-t), with 0 log 0 = 0 (a nonpositive number)."""
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"mixing weight must be in [0,1], got {t}")
    out = 0.0
    if t > 0.0:
        out += t * np.log(t)
    if t < 1.0:
        out += (1.0 - t) * np.log(1.0 - t)
    return float(out)


def gaussian_scalar_deficit(s: float) -> float:
    """deficit of the centered Gaussian with variance s: (1/2)(1/s - 1 + log s)."""
    if s <= 0:
        raise DomainError("variance must be positive")
    return 0.5 * (1.0 / s - 1.0 + float(np.log(s)))


# ----------------------------------------------------------------------
# core inequality checks
# ----------------------------------------------------------------------

def check_lsi(mix: GaussianMixture, budget: Budget = DEFAULT_BUDGET) -> BoundReport:
    """H(mu|gamma) <= (1/2) I(mu|gamma)."""
    h = entropy_rel_gaussian(mix, budget)
    i = fisher_trace(mix, "gaussian", budget)
    rhs = Estimate(0.5 * i.value, 0.5 * i.abs_error, i.method, i.n)
    return BoundReport.build("lsi", h, rhs, "lhs<=rhs")


def check_dimensional_lsi(mix: GaussianMixture, budget: Budget = DEFAULT_BUDGET) -> BoundReport:
    """H(mu|L) - H(gamma|L) <= (n/2) log(I(mu|L)/n)."""
    n = mix.dim
    lhs = entropy_gap_lebesgue(mix, budget)
    i_leb = fisher_trace(mix, "lebesgue", budget)
    val = 0.5 * n * float(np.log(i_leb.value / n))
    # first-order error propagation through the log
    err = 0.5 * n * i_leb.abs_error / max(i_leb.value, 1e-300)
    rhs = Estimate(val, err, i_leb.method, i_leb.n)
    return BoundReport.build("dimensional_lsi", lhs, rhs, "lhs<=rhs")


def check_logdet_bound(mix: GaussianMixture, budget: Budget = DEFAULT_BUDGET) -> BoundReport:
    """H(mu|L) - H(gamma|L) <= (1/2) log det FI(mu|L).

    Scale invariant and additive under tensor products; strengthens the
    dimensional form by AM/GM, and the report records that gap in notes.
    """
    n = mix.dim
    lhs = entropy_gap_lebesgue(mix, budget)
    fi = fisher_matrix(mix, "lebesgue", budget)
    spec = SpectralData.from_matrix(fi.value, "fisher_leb")
    smallest = float(spec.eigenvalues[-1])
    if smallest <= 1e-12:
        raise SingularFisherMatrix(
            f"Lebesgue Fisher matrix has eigenvalue {smallest:g}")
    val = 0.5 * float(np.sum(np.log(spec.eigenvalues)))
    err = 0.5 * n * fi.abs_error / smallest
    rhs = Estimate(val, err, fi.method, fi.n)
    dimensional_rhs = 0.5 * n * float(np.log(np.trace(fi.value) / n))
    amgm_gap = dimensional_rhs - val
    return BoundReport.build(
        "logdet_fisher", lhs, rhs, "lhs<=rhs",
        notes=f"amgm_gap={amgm_gap:.6g} (dimensional rhs minus logdet rhs, >= 0)")


def check_eigen_deficit_bounds(mix: GaussianMixture, budget: Budget = DEFAULT_BUDGET
                               ) -> tuple[BoundReport, BoundReport]:
    """Two eigenvalue lower bounds on the deficit.

    (1) deficit >= (1/2) sum Delta(alpha_i - 1), alpha_i the eigenvalues of
        the Lebesgue Fisher matrix; unconditional.
    (2) deficit >= (1/2) sum Delta(beta_i), beta_i the eigenvalues of the
        Gaussian Fisher matrix; requires E_mu[x (x) x] <= Id.  Small
        negative beta from estimation noise are clipped at zero.
    """
    dlt = deficit(mix, budget)
    fl = fisher_matrix(mix, "lebesgue", budget)
    alpha = SpectralData.from_matrix(fl.value, "fisher_leb").eigenvalues
    alpha_shift = alpha - 1.0
    if np.any(alpha_shift <= -1.0):
        raise SingularFisherMatrix("Lebesgue Fisher matrix has a nonpositive eigenvalue")
    val_a = 0.5 * sum(delta_fn(a) for a in alpha_shift)
    # |Delta'(t)| = |t|/(1+t); propagate the entrywise matrix error
    deriv_a = sum(abs(a) / (1.0 + a) for a in alpha_shift)
    rep_alpha = BoundReport.build(
        "eigen_deficit_lebesgue", dlt,
        Estimate(val_a, 0.5 * deriv_a * fl.abs_error * mix.dim, fl.method, fl.n),
        "lhs>=rhs")

    fg = fisher_matrix(mix, "gaussian", budget)
    beta = SpectralData.from_matrix(fg.value, "fisher_gauss").eigenvalues
    if np.any(beta < -SEMIDEFINITE_TOL):
        beta = beta.copy()
    beta = np.clip(beta, 0.0, None)
    second = mix.second_moment()
    sec_eigs = np.linalg.eigvalsh(second)
    pre_ok = bool(sec_eigs.max() <= 1.0 + SEMIDEFINITE_TOL)
    val_b = 0.5 * sum(delta_fn(b) for b in beta)
    deriv_b = sum(b / (1.0 + b) for b in beta)
    rep_beta = BoundReport.build(
        "eigen_deficit_gaussian", dlt,
        Estimate(val_b, 0.5 * deriv_b * fg.abs_error * mix.dim, fg.method, fg.n),
        "lhs>=rhs", preconditions_met=pre_ok,
        notes="" if pre_ok else
        f"second moment matrix exceeds Id (max eigenvalue {sec_eigs.max():.6g}); informational")
    return rep_alpha, rep_beta


def check_cov_bound(mix: GaussianMixture, budget: Budget = DEFAULT_BUDGET) -> BoundReport:
    """deficit >= (1/2) sum over {lambda_i < 1} of (1/lambda_i - 1 + log lambda_i).

    lambda_i are the exact mixture covariance eigenvalues.  When the
    covariance is dominated by the identity the bound equals the deficit of
    the Gaussian with the same covariance, and the Hilbert-Schmidt
    corollary deficit >= (1/4) ||cov - Id||_HS^2 is recorded in notes.
    """
    dlt = deficit(mix, budget)
    _, cov = mix.moments()
    lam = np.linalg.eigvalsh(cov)
    below = lam[lam < 1.0]
    val = 0.5 * float(np.sum(1.0 / below - 1.0 + np.log(below))) if len(below) else 0.0
    notes = ""
    if lam.max() <= 1.0 + SEMIDEFINITE_TOL:
        hs = 0.25 * float(np.sum((lam - 1.0) ** 2))
        notes = f"hs_corollary_rhs={hs:.9g} (cov <= Id, so deficit >= this too)"
    return BoundReport.build("cov_deficit", dlt, closed(val), "lhs>=rhs", notes=notes)


def check_cramer_rao(mix: GaussianMixture, budget: Budget = DEFAULT_BUDGET) -> BoundReport:
    """cov(mu)^{-1} <= FI(mu|L): smallest eigenvalue of the difference >= 0."""
    fi = fisher_matrix(mix, "lebesgue", budget)
    _, cov = mix.moments()
    diff = fi.value - np.linalg.inv(cov)
    smallest = float(np.linalg.eigvalsh(0.5 * (diff + diff.T))[0])
    lhs = Estimate(smallest, fi.abs_error * mix.dim, fi.method, fi.n)
    return BoundReport.build(
        "cramer_rao", lhs, closed(0.0), "lhs>=rhs",
        notes="lhs is the smallest eigenvalue of FI(mu|L) - cov(mu)^{-1}")


# ----------------------------------------------------------------------
# optimal scaling
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class OptimalScaling:
    sigma: np.ndarray
    report: BoundReport


def _scaled_bound_rhs(sigma, fisher_leb, n):
    """(1/2)(Tr(Sigma^{-2} FI) - n + log det Sigma^2) for symmetric PD Sigma."""
    sig_inv = np.linalg.inv(sigma)
    tr = float(np.trace(sig_inv @ sig_inv @ fisher_leb))
    _, logdet = np.linalg.slogdet(sigma)
    return 0.5 * (tr - n + 2.0 * float(logdet))


def optimal_scaling(mix: GaussianMixture, budget: Budget = DEFAULT_BUDGET,
                    n_probe: int = 8, probe_seed: int = 0) -> OptimalScaling:
    """Matrix square root of FI(mu|L): the scaling that tightens the
    entropy bound, turning the trace form into the log-determinant form.

    The report checks that the entropy gap of the pushforward by Sigma
    is bounded by (1/2) log det FI (the scaled inequality collapses to
    that), and probes local minimality of the scaled right-hand side under
    +-5% random symmetric perturbations.
    """
    n = mix.dim
    fi = fisher_matrix(mix, "lebesgue", budget)
    spec = SpectralData.from_matrix(fi.value, "fisher_leb")
    if spec.eigenvalues[-1] <= 1e-12:
        raise SingularFisherMatrix("Fisher matrix not positive definite")
    sigma = (spec.eigenvectors * np.sqrt(spec.eigenvalues)) @ spec.eigenvectors.T
    pushed = mix.transform(sigma)
    lhs = entropy_gap_lebesgue(pushed, budget)
    base_rhs = _scaled_bound_rhs(sigma, fi.value, n)
    logdet_rhs = 0.5 * float(np.sum(np.log(spec.eigenvalues)))
    rng = stream(budget.seed, "optscale", probe_seed)
    probe_ok = True
    worst = np.inf
    for _ in range(n_probe):
        D = rng.standard_normal((n, n))
        D = 0.5 * (D + D.T)
        D /= max(np.linalg.norm(D), 1e-300)
        for sign in (+1.0, -1.0):
            pert = sigma + sign * 0.05 * np.linalg.norm(sigma) * D
            eigs = np.linalg.eigvalsh(pert)
            if eigs.min() <= 1e-10:
                continue
            gap = _scaled_bound_rhs(pert, fi.value, n) - base_rhs
            worst = min(worst, gap)
            if gap < -1e-10:
                probe_ok = False
    rhs = Estimate(logdet_rhs, 0.5 * n * fi.abs_error / spec.eigenvalues[-1],
                   fi.method, fi.n)
    notes = (f"scaled rhs at sigma equals logdet rhs (diff {base_rhs - logdet_rhs:.3g}); "
             f"local minimality probe worst perturbation gap {worst:.3g}")
    report = BoundReport.build("optimal_scaling", lhs, rhs, "lhs<=rhs",
                               preconditions_met=probe_ok, notes=notes)
    return OptimalScaling(sigma=sigma, report=report)


# ----------------------------------------------------------------------
# two-Gaussian mixture helpers
# ----------------------------------------------------------------------

def mixture_deficit_upper(a: float, b: float, sigma: float, t: float) -> float:
    """Upper bound for the deficit of (1-t) N(a, sigma) + t N(b, sigma):

        (1/4)(1/sigma - 1)^2 - (1-t) log(1-t) - t log t

    valid for sigma in (0, 1] and t in [0, 1] (0 log 0 = 0).
    """
    if not 0.0 < sigma <= 1.0:
        raise DomainError(f"sigma must be in (0,1], got {sigma}")
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"t must be in [0,1], got {t}")
    return 0.25 * (1.0 / sigma - 1.0) ** 2 - mixing_entropy(t)


def convexity_deficit_bound(mu: GaussianMixture, nu: GaussianMixture, t: float,
                            budget: Budget = DEFAULT_BUDGET) -> BoundReport:
    """deficit((1-t) mu + t nu) <= (1-t) deficit(mu) + t deficit(nu) - phi(t)."""
    if mu.dim != nu.dim:
        raise DomainError("measures must share a dimension")
    if not 0.0 < t < 1.0:
        raise DomainError("t must be in (0,1)")
    comps = ([((1.0 - t) * w, m, c) for w, m, c in zip(mu.weights, mu.means, mu.covs)]
             + [(t * w, m, c) for w, m, c in zip(nu.weights, nu.means, nu.covs)])
    combined = mixture_new(mu.dim, comps)
    lhs = deficit(combined, budget)
    d_mu = deficit(mu, budget)
    d_nu = deficit(nu, budget)
    val = (1.0 - t) * d_mu.value + t * d_nu.value - mixing_entropy(t)
    err = (1.0 - t) * d_mu.abs_error + t * d_nu.abs_error
    method = MONTE_CARLO if MONTE_CARLO in (d_mu.method, d_nu.method) else QUADRATURE
    rhs = Estimate(val, err, method, max(d_mu.n, d_nu.n))
    return BoundReport.build("mixture_convexity", lhs, rhs, "lhs<=rhs")


def shannon_bound(points, weights, base_cov=None,
                  budget: Budget = DEFAULT_BUDGET) -> BoundReport:
    """deficit(p * gamma) <= S(p) for a finitely supported p.

    S(p) = -sum p log p is the Shannon entropy of the atom weights.
    """
    mix = discrete_convolved_with_gaussian(points, weights, base_cov)
    lhs = deficit(mix, budget)
    w = np.asarray(weights, dtype=float)
    w = w / w.sum()
    s = float(-np.sum(w * np.log(w)))
    return BoundReport.build("shannon_mixture", lhs, closed(s), "lhs<=rhs")


def wasserstein_lower_two_point(a: float, b: float, sigma: float, t: float,
                                p: float) -> Estimate:
    """Lower bound on inf_m W_p^p((1-t)N(a,sigma) + tN(b,sigma), N(m,1)):

        min(t, 1-t) |b-a|^p / 4^{p+1}

    valid under the tail condition min(t,1-t) >= 2 exp(-(b-a)^2/32); raises
    TailAssumptionViolated otherwise so callers cannot silently use it.
    """
    from .errors import TailAssumptionViolated

    if not 0.0 < sigma <= 1.0:
        raise DomainError(f"sigma must be in (0,1], got {sigma}")
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"t must be in [0,1], got {t}")
    if p < 1:
        raise DomainError("p must be >= 1")
    gap = abs(b - a)
    threshold = 2.0 * float(np.exp(-gap * gap / 32.0))
    m = min(t, 1.0 - t)
    if m < threshold:
        raise TailAssumptionViolated(
            f"min(t,1-t)={m:g} below tail threshold {threshold:g}")
    return closed(m * gap ** p / 4.0 ** (p + 1))


def check_bgrs_bounds(mix: GaussianMixture, budget: Budget = DEFAULT_BUDGET,
                      wasserstein_constant: float = DEFAULT_WASSERSTEIN_CONSTANT,
                      w2_points: int = 4096, w2_reps: int = 3
                      ) -> tuple[BoundReport, BoundReport]:
    """Dimension-dependent deficit lower bounds under E_mu|x|^2 <= n.

    (1) deficit >= (n/2) Delta(I(mu|gamma)/n)
    (2) deficit >= (c/n) W2(mu,gamma)^4 with an unspecified universal
        constant c; c defaults to 1/100 and is configurable, which the
        notes record.  W2 is a sampled estimate.
    """
    from .transport import EmpiricalMeasure, wasserstein_sampled

    n = mix.dim
    dlt = deficit(mix, budget)
    i_gamma = fisher_trace(mix, "gaussian", budget)
    second = float(np.trace(mix.second_moment()))
    pre_ok = second <= n + SEMIDEFINITE_TOL
    pre_note = "" if pre_ok else (
        f"E|x|^2 = {second:.6g} exceeds n = {n}; informational. ")
    val1 = 0.5 * n * delta_fn(i_gamma.value / n)
    deriv = abs(i_gamma.value / n) / (1.0 + i_gamma.value / n)
    rep1 = BoundReport.build(
        "scalar_fisher_deficit", dlt,
        Estimate(val1, 0.5 * deriv * i_gamma.abs_error, i_gamma.method, i_gamma.n),
        "lhs>=rhs", preconditions_met=pre_ok, notes=pre_note.strip())

    rng = stream(budget.seed, "bgrs_w2")
    vals = []
    for _ in range(w2_reps):
        xs = mix.sample(w2_points, rng)
        gs = rng.standard_normal((w2_points, n))
        vals.append(wasserstein_sampled(EmpiricalMeasure(xs), EmpiricalMeasure(gs), p=2))
    w2 = float(np.mean(vals))
    w2_se = float(np.std(vals, ddof=1) / np.sqrt(len(vals))) if len(vals) > 1 else 0.0
    val2 = wasserstein_constant / n * w2 ** 4
    err2 = wasserstein_constant / n * 4.0 * w2 ** 3 * w2_se
    rep2 = BoundReport.build(
        "quartic_wasserstein_deficit", dlt,
        Estimate(val2, err2, MONTE_CARLO, w2_points * w2_reps),
        "lhs>=rhs", preconditions_met=pre_ok,
        notes=(pre_note + f"universal constant not pinned down; using c={wasserstein_constant}").strip())
    return rep1, rep2


# ----------------------------------------------------------------------
# battery used by the CLI
# ----------------------------------------------------------------------

def standard_battery(mix: GaussianMixture, budget: Budget = DEFAULT_BUDGET
                     ) -> list[BoundReport]:
    """All inequality checks applicable to a mixture, in a fixed order."""
    reports = [
        check_lsi(mix, budget),
        check_dimensional_lsi(mix, budget),
        check_logdet_bound(mix, budget),
    ]
    reports.extend(check_eigen_deficit_bounds(mix, budget))
    reports.append(check_cov_bound(mix, budget))
    reports.append(check_cramer_rao(mix, budget))
    reports.extend(check_bgrs_bounds(mix, budget))
    from .functionals import integration_by_parts_check
    reports.append(integration_by_parts_check(mix, budget))
    reports.append(optimal_scaling(mix, budget).report)
    return reports
