"""Parameterized two-Gaussian families with analytic deficit/transport bounds.

Two families of scalar mixtures demonstrate that the deficit fails to
control covariance or Wasserstein distance in general:

  * variance blow-up: (1 - 1/k) N(0,1) + (1/k) N(k^2, 1).  Its variance
    grows like k^3 while the deficit upper bound shrinks like log(k)/k.
  * isotropic: (1-t) N(a, s) + t N(b, s) with t = k^{-3/2}, a = -1/k,
    b = -(1-t)a/t and s = 1 - t(1-t)(b-a)^2, which has mean 0 and variance
    1 exactly, deficit O(1/k), yet squared quadratic transport distance to
    every translated standard Gaussian at least 1/(64 sqrt(k)).

Tensor powers are accounted analytically (deficit and squared transport
cost are both additive), with n(k) = floor(k^{3/4}) factors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .bounds import mixture_deficit_upper
from .errors import DegenerateDeficit, DomainError, SigmaNonPositive
from .functionals import DEFAULT_BUDGET, Budget, Estimate, deficit
from .gaussmix import GaussianMixture, discrete_convolved_with_gaussian, mixture_new
from .rng import stream
from .transport import EmpiricalMeasure, infimum_over_translates, wasserstein_sampled


@dataclass(frozen=True)
class FamilyAnalytic:
    variance: float
    deficit_upper: float
    w_lower_p1: float
    w2_lower: float
    tail_ok: bool


@dataclass(frozen=True)
class FamilyMember:
    k: float
    mixture: GaussianMixture
    analytic: FamilyAnalytic


def _two_point_analytic(a: float, b: float, sigma: float, t: float) -> FamilyAnalytic:
    gap = abs(b - a)
    m = min(t, 1.0 - t)
    tail_ok = m >= 2.0 * math.exp(-gap * gap / 32.0)
    variance = sigma + t * (1.0 - t) * gap * gap
    return FamilyAnalytic(
        variance=variance,
        deficit_upper=mixture_deficit_upper(a, b, sigma, t),
        w_lower_p1=m * gap / 16.0,
        w2_lower=m * gap * gap / 64.0,
        tail_ok=tail_ok,
    )


def variance_blowup_family(k: int) -> FamilyMember:
    """(1 - 1/k) N(0,1) + (1/k) N(k^2, 1) for integer k >= 2."""
    k = int(k)
    if k < 2:
        raise DomainError("k must be an integer >= 2")
    t = 1.0 / k
    b = float(k) ** 2
    mixture = mixture_new(1, [(1.0 - t, [0.0], [[1.0]]), (t, [b], [[1.0]])])
    return FamilyMember(k=k, mixture=mixture,
                        analytic=_two_point_analytic(0.0, b, 1.0, t))


def isotropic_family(k: float) -> FamilyMember:
    """Centered unit-variance two-point mixture with parameter k >= 2."""
    k = float(k)
    if k < 2:
        raise DomainError("k must be >= 2")
    t = k ** -1.5
    a = -1.0 / k
    b = -(1.0 - t) * a / t
    gap_sq = (b - a) ** 2
    sigma = 1.0 - t * (1.0 - t) * gap_sq
    if sigma <= 0.0:
        raise SigmaNonPositive(f"construction gives sigma={sigma:g} at k={k}")
    mixture = mixture_new(1, [(1.0 - t, [a], [[sigma]]), (t, [b], [[sigma]])])
    return FamilyMember(k=k, mixture=mixture,
                        analytic=_two_point_analytic(a, b, sigma, t))


FAMILIES = {
    "variance_blowup": variance_blowup_family,
    "isotropic": isotropic_family,
}


def tensor_copies(k: float) -> int:
    """Number of tensor factors n(k) = floor(k^{3/4})."""
    return int(math.floor(float(k) ** 0.75))


def expand_measure_json(obj) -> GaussianMixture:
    """Expand {"family": name, "k": value} into its mixture."""
    name = obj.get("family")
    if name not in FAMILIES:
        raise DomainError(f"unknown family {name!r}; known: {sorted(FAMILIES)}")
    if "k" not in obj:
        raise DomainError("family shorthand requires a 'k' field")
    return FAMILIES[name](obj["k"]).mixture


# ----------------------------------------------------------------------
# sweeps
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class SweepOptions:
    measure_deficit: bool = False
    measure_transport: bool = False
    points: int = 2048
    reps: int = 5
    seed: int = 0
    budget: Budget = DEFAULT_BUDGET


SWEEP_COLUMNS = [
    "k", "variance", "deficit_upper", "w_lower_p1", "w2_lower", "tail_ok",
    "n_tensor", "tensor_deficit_upper", "tensor_w2_lower",
    "measured_deficit", "measured_deficit_err",
    "measured_w1_inf", "measured_w1_inf_err",
    "measured_w2sq_inf", "measured_w2sq_inf_err",
]


def _inf_translate_stats(mix: GaussianMixture, p: float, points: int, reps: int,
                         seed: int):
    vals = []
    for r in range(reps):
        xs = mix.sample(points, stream(seed, "sweep_mu", r))
        fit = infimum_over_translates(EmpiricalMeasure(xs), p,
                                      stream(seed, "sweep_ref", r))
        vals.append(fit.value)
    vals = np.asarray(vals)
    se = float(vals.std(ddof=1) / np.sqrt(reps)) if reps > 1 else 0.0
    return float(vals.mean()), se, vals


def sweep(family: str, k_list, options: SweepOptions | None = None) -> list[dict]:
    """Rows of analytic (and optionally measured) columns, sorted by k."""
    if family not in FAMILIES:
        raise DomainError(f"unknown family {family!r}")
    if not k_list:
        raise DomainError("k_list must be non-empty")
    options = options or SweepOptions()
    rows = []
    for k in sorted(k_list):
        member = FAMILIES[family](k)
        an = member.analytic
        n = tensor_copies(k)
        row = {
            "k": k,
            "variance": an.variance,
            "deficit_upper": an.deficit_upper,
            "w_lower_p1": an.w_lower_p1,
            "w2_lower": an.w2_lower,
            "tail_ok": an.tail_ok,
            "n_tensor": n,
            "tensor_deficit_upper": n * an.deficit_upper,
            "tensor_w2_lower": n * an.w2_lower,
            "measured_deficit": None, "measured_deficit_err": None,
            "measured_w1_inf": None, "measured_w1_inf_err": None,
            "measured_w2sq_inf": None, "measured_w2sq_inf_err": None,
        }
        if options.measure_deficit:
            d = deficit(member.mixture, options.budget)
            row["measured_deficit"] = d.value
            row["measured_deficit_err"] = d.abs_error
        if options.measure_transport:
            w1, w1_se, _ = _inf_translate_stats(member.mixture, 1, options.points,
                                                options.reps, options.seed + int(k))
            row["measured_w1_inf"] = w1
            row["measured_w1_inf_err"] = w1_se
            w2, w2_se, w2_vals = _inf_translate_stats(member.mixture, 2, options.points,
                                                      options.reps, options.seed + int(k))
            sq = w2_vals ** 2
            row["measured_w2sq_inf"] = float(sq.mean())
            row["measured_w2sq_inf_err"] = (float(sq.std(ddof=1) / np.sqrt(len(sq)))
                                            if len(sq) > 1 else 0.0)
        rows.append(row)
    return rows


# ----------------------------------------------------------------------
# discrete-mixture probe
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class ProbeResult:
    """Exploratory fit of a discrete measure p minimizing W2^2(mu, p * gamma).

    Reports the achieved Shannon entropy and squared distance together
    with the implied constant max(S, W2^2) / deficit.  This probes an open
    question and certifies nothing.
    """

    locations: np.ndarray
    weights: np.ndarray
    shannon_entropy: float
    w2_squared: float
    deficit: Estimate
    implied_constant: float


def _kmeans_init(xs: np.ndarray, k: int, rng) -> np.ndarray:
    n = len(xs)
    centers = [xs[rng.integers(n)]]
    for _ in range(k - 1):
        d2 = np.min([np.sum((xs - c) ** 2, axis=1) for c in centers], axis=0)
        prob = d2 / max(d2.sum(), 1e-300)
        centers.append(xs[rng.choice(n, p=prob)])
    centers = np.array(centers)
    for _ in range(25):
        assign = np.argmin(
            ((xs[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2), axis=1)
        for j in range(k):
            mask = assign == j
            if np.any(mask):
                centers[j] = xs[mask].mean(axis=0)
    return centers


def _apportion(weights: np.ndarray, total: int) -> np.ndarray:
    """Largest-remainder rounding of total * weights to integers summing to total."""
    raw = weights * total
    counts = np.floor(raw).astype(int)
    short = total - counts.sum()
    order = np.argsort(-(raw - counts))
    counts[order[:short]] += 1
    return counts


def question1_probe(mix: GaussianMixture, candidate_support_size: int,
                    budget: Budget = DEFAULT_BUDGET, n_samples: int = 2048,
                    n_iters: int = 20, seed: int = 0) -> ProbeResult:
    """Alternating assignment/centroid fit of p with at most the given atoms."""
    if candidate_support_size > 16:
        raise DomainError("support size is capped at 16")
    dlt = deficit(mix, budget)
    if dlt.value <= dlt.abs_error:
        raise DegenerateDeficit(
            f"deficit {dlt.value:g} within error {dlt.abs_error:g}; ratio undefined")
    d = mix.dim
    rng = stream(seed, "probe")
    xs = mix.sample(n_samples, rng)
    centers = _kmeans_init(xs, candidate_support_size, rng)
    assign = np.argmin(((xs[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2), axis=1)
    weights = np.bincount(assign, minlength=candidate_support_size) / n_samples
    noise = rng.standard_normal((n_samples, d))

    w2sq = np.inf
    for _ in range(n_iters):
        counts = _apportion(weights, n_samples)
        labels = np.repeat(np.arange(candidate_support_size), counts)
        ys = centers[labels] + noise
        if d == 1:
            order_x = np.argsort(xs[:, 0])
            order_y = np.argsort(ys[:, 0])
            pairs_x, pairs_y = order_x, order_y
        else:
            from scipy.optimize import linear_sum_assignment
            from scipy.spatial.distance import cdist
            cost = cdist(xs, ys) ** 2
            pairs_x, pairs_y = linear_sum_assignment(cost)
        diff = xs[pairs_x] - ys[pairs_y]
        w2sq = float(np.mean(np.sum(diff ** 2, axis=1)))
        # centroid update: atoms move to the mean residual of their block
        resid = xs[pairs_x] - noise[pairs_y]
        lab = labels[pairs_y]
        for j in range(candidate_support_size):
            mask = lab == j
            if np.any(mask):
                centers[j] = resid[mask].mean(axis=0)
        assign = np.argmin(((xs[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2), axis=1)
        weights = np.bincount(assign, minlength=candidate_support_size) / n_samples

    keep = weights > 0
    centers, weights = centers[keep], weights[keep]
    weights = weights / weights.sum()
    entropy = float(-np.sum(weights * np.log(weights)))
    implied = max(entropy, w2sq) / dlt.value
    return ProbeResult(locations=centers, weights=weights,
                       shannon_entropy=entropy, w2_squared=w2sq,
                       deficit=dlt, implied_constant=float(implied))
