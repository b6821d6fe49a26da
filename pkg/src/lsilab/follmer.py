"""Bridge process with closed-form drift for Gaussian-mixture targets.

The process solves dX_t = dB_t + v_t dt on [0,1] with X_0 = 0, where
v_t = grad log P_{1-t} f (X_t), f is the target density relative to the
standard Gaussian and P the heat semigroup.  Its time-1 law is the target,
and the conditional law of X_1 given the path up to t is again a Gaussian
mixture, obtained by completing the square between each component and the
heat kernel of bandwidth 1-t:

    posterior weight_j  ~  w_j N(x; t m_j, t^2 C_j + t(1-t) Id)
    posterior mean_j    =  m_j + K_j (x - t m_j),  K_j = t C_j S_j(t)^{-1}
    posterior cov_j     =  C_j - K_j t C_j,        S_j(t) = t^2 C_j + t(1-t) Id

Everything downstream is exact given these: the drift is
(posterior mean - x)/(1-t), the curvature Q_t = grad^2 log P_{1-t} f equals
(cov(mu_t) - Id)/(1-t) where mu_t is the posterior rescaled by 1/sqrt(1-t),
and simulation needs no density evaluations at all.

Simulation integrates Euler-Maruyama on [0, 1-eps] (the drift magnifies
like 1/(1-t), so the last stretch is replaced by one exact draw from the
closed-form conditional law, making X_1 exactly distributed given the
stopped path).  Identities tying path functionals to entropy, Fisher
information and the deficit are exercised by the diagnostics below; the
drift is a martingale with dv_t = Q_t dB_t, which gives

    H(mu|gamma)   = (1/2) E int_0^1 |v_t|^2 dt
    deficit(mu)   = (1/2) E int_0^1 |v_1 - v_t|^2 dt
    E[v_t]        = mean(mu)                      (constant in t)
    E[Q_t]        = cov(mu) - Id - cov(v_t)

Note the stochastic-integral identities (v_t = v_0 + int Q dB and
X_1 = mean(mu) + int cov(mu_t) dB) carry the mean explicitly here; the
integrals themselves are centered.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import BudgetExceeded, DimensionMismatch
from .functionals import (
    Budget,
    DEFAULT_BUDGET,
    MONTE_CARLO,
    Estimate,
    deficit as deficit_functional,
)
from .gaussmix import LOG_2PI, GaussianMixture
from .rng import stream

FULL_MATRIX_DIM_LIMIT = 8
POSTERIOR_WEIGHT_FLOOR = 1e-300


# ----------------------------------------------------------------------
# closed-form conditional structure at a fixed time
# ----------------------------------------------------------------------

class BridgeKernel:
    """Conditional law of the endpoint given position x at time t < 1."""

    def __init__(self, mix: GaussianMixture, t: float):
        if not 0.0 <= t < 1.0:
            raise ValueError(f"kernel time must be in [0,1), got {t}")
        self.mix = mix
        self.t = float(t)
        d = mix.dim
        J = mix.n_components
        self.post_covs = np.empty((J, d, d))
        self.post_chols = np.empty((J, d, d))
        if t == 0.0:
            # Exponential tilt limit: weights ~ w_j exp(<x,m_j> + x'C_j x/2),
            # mean m_j + C_j x, covariance C_j.
            self.gains = mix.covs.copy()
            self.post_covs[:] = mix.covs
            self.marg_chols = None
            self.marg_logdets = None
        else:
            self.gains = np.empty((J, d, d))
            self.marg_chols = np.empty((J, d, d))
            self.marg_logdets = np.empty(J)
            for j in range(J):
                marg = t * t * mix.covs[j] + t * (1.0 - t) * np.eye(d)
                L = np.linalg.cholesky(marg)
                self.marg_chols[j] = L
                self.marg_logdets[j] = 2.0 * float(np.sum(np.log(np.diag(L))))
                tC = t * mix.covs[j]
                # K = tC marg^{-1}; solve with the factor of the symmetric marg
                half = np.linalg.solve(L, tC)
                M = np.linalg.solve(L.T, half)  # marg^{-1} tC
                self.gains[j] = M.T
                cov = mix.covs[j] - self.gains[j] @ tC
                self.post_covs[j] = 0.5 * (cov + cov.T)
        for j in range(J):
            self.post_chols[j] = np.linalg.cholesky(self.post_covs[j])

    def posterior_parts(self, X):
        """Log-weights (relative) and means of the endpoint law, batched.

        Returns (logw (P,J) unnormalized, eta (P,J,d)).
        """
        mix, t = self.mix, self.t
        X = np.atleast_2d(np.asarray(X, dtype=float))
        P, d = X.shape
        J = mix.n_components
        logw = np.empty((P, J))
        eta = np.empty((P, J, d))
        if t == 0.0:
            for j in range(J):
                logw[:, j] = (np.log(mix.weights[j]) + X @ mix.means[j]
                              + 0.5 * np.einsum("pa,ab,pb->p", X, mix.covs[j], X))
                eta[:, j] = mix.means[j] + X @ mix.covs[j].T
        else:
            for j in range(J):
                diff = X - t * mix.means[j]
                y = np.linalg.solve(self.marg_chols[j], diff.T)
                maha = np.einsum("ap,ap->p", y, y)
                logw[:, j] = (np.log(mix.weights[j])
                              - 0.5 * (d * LOG_2PI + self.marg_logdets[j] + maha))
                eta[:, j] = mix.means[j] + diff @ self.gains[j].T
        return logw, eta

    def responsibilities(self, X):
        logw, eta = self.posterior_parts(X)
        logw = logw - logw.max(axis=1, keepdims=True)
        r = np.exp(logw)
        r /= r.sum(axis=1, keepdims=True)
        return r, eta

    def stats(self, X):
        """Drift and rescaled conditional covariance, batched.

        Returns (v (P,d), A (P,d,d)) with A = cov(X_1 | x) / (1-t), the
        covariance of the rescaled conditional law.
        """
        X = np.atleast_2d(np.asarray(X, dtype=float))
        r, eta = self.responsibilities(X)
        post_mean = np.einsum("pj,pjd->pd", r, eta)
        post_cov = (np.einsum("pj,jab->pab", r, self.post_covs)
                    + np.einsum("pj,pja,pjb->pab", r, eta, eta)
                    - np.einsum("pa,pb->pab", post_mean, post_mean))
        one_minus_t = 1.0 - self.t
        v = (post_mean - X) / one_minus_t
        A = post_cov / one_minus_t
        return v, A

    def sample_endpoint(self, X, rng):
        """One exact draw of X_1 per row of X from the conditional law."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        P, d = X.shape
        r, eta = self.responsibilities(X)
        cum = np.cumsum(r, axis=1)
        u = rng.uniform(size=P)
        comp = np.minimum((u[:, None] > cum).sum(axis=1), r.shape[1] - 1)
        z = rng.standard_normal((P, d))
        out = np.empty((P, d))
        for j in range(self.mix.n_components):
            mask = comp == j
            if np.any(mask):
                out[mask] = eta[mask, j] + z[mask] @ self.post_chols[j].T
        return out


@dataclass(frozen=True)
class BridgeState:
    """Pointwise bridge data at (t, x).

    ``posterior`` is the conditional law of (X_1 - x)/sqrt(1-t), a mixture;
    drift and curvature satisfy
        drift = (x + sqrt(1-t) mean(posterior) - x)/(1-t)
        curvature = (cov(posterior) - Id)/(1-t).
    """

    t: float
    x: np.ndarray
    posterior: GaussianMixture
    drift: np.ndarray
    curvature: np.ndarray


def bridge_state(mix: GaussianMixture, t: float, x) -> BridgeState:
    """Closed-form bridge data at a single point."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (mix.dim,):
        raise DimensionMismatch(f"point of shape {x.shape} in dim {mix.dim}")
    kernel = BridgeKernel(mix, t)
    r, eta = kernel.responsibilities(x[None, :])
    r, eta = r[0], eta[0]
    keep = r > POSTERIOR_WEIGHT_FLOOR
    r, eta = r[keep], eta[keep]
    covs = kernel.post_covs[keep]
    r = r / r.sum()
    scale = np.sqrt(1.0 - t)
    posterior = GaussianMixture(mix.dim, r, (eta - x) / scale, covs / (1.0 - t))
    v, A = kernel.stats(x[None, :])
    q = (A[0] - np.eye(mix.dim)) / (1.0 - t)
    return BridgeState(t=float(t), x=x, posterior=posterior, drift=v[0], curvature=q)


def terminal_drift(mix: GaussianMixture, X1):
    """v_1 = grad log f(X_1) = score(X_1) + X_1."""
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    return mix.score(X1) + X1


def terminal_curvature(mix: GaussianMixture, X1):
    """Q_1 = grad^2 log f(X_1) = Hessian log density + Id."""
    X1 = np.atleast_2d(np.asarray(X1, dtype=float))
    _, h = mix.score_and_hessian(X1)
    return h + np.eye(mix.dim)


# ----------------------------------------------------------------------
# quadrature oracle for the drift (tests only)
# ----------------------------------------------------------------------

def log_heat_semigroup(mix: GaussianMixture, t: float, x,
                       half_width: float = 40.0, n_nodes: int = 8001) -> float:
    """log P_{1-t} f (x) by dense log-space Simpson quadrature (dim <= 2)."""
    if t > 1.0 - 1e-6:
        raise BudgetExceeded("quadrature oracle requires t <= 1 - 1e-6")
    x = np.atleast_1d(np.asarray(x, dtype=float))
    d = mix.dim
    if d > 2:
        raise ValueError("oracle supports dim <= 2 only")
    if d == 2:
        n_nodes = min(n_nodes, 401)
        half_width = min(half_width, 20.0)
    if n_nodes % 2 == 0:
        n_nodes += 1
    u = np.linspace(-half_width, half_width, n_nodes)
    h = u[1] - u[0]
    w = np.full(n_nodes, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    w *= h / 3.0
    scale = np.sqrt(1.0 - t)
    if d == 1:
        Y = x[None, :] + scale * u[:, None]
        logg = mix.log_ratio(Y) - 0.5 * u ** 2 - 0.5 * LOG_2PI
        return float(logsumexp(logg + np.log(w)))
    U = np.stack(np.meshgrid(u, u, indexing="ij"), axis=-1).reshape(-1, 2)
    W = np.outer(w, w).ravel()
    Y = x[None, :] + scale * U
    logg = mix.log_ratio(Y) - 0.5 * np.einsum("na,na->n", U, U) - LOG_2PI
    return float(logsumexp(logg + np.log(W)))


def drift_quadrature_oracle(mix: GaussianMixture, t: float, x,
                            fd_step: float = 1e-4) -> np.ndarray:
    """Drift via central finite differences of the quadrature log-semigroup.

    Independent of the closed-form kernel; used to validate it.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    grad = np.empty_like(x)
    for a in range(len(x)):
        xp = x.copy()
        xm = x.copy()
        xp[a] += fd_step
        xm[a] -= fd_step
        grad[a] = (log_heat_semigroup(mix, t, xp)
                   - log_heat_semigroup(mix, t, xm)) / (2.0 * fd_step)
    return grad


# ----------------------------------------------------------------------
# ensemble simulation
# ----------------------------------------------------------------------

@dataclass
class DiagnosticAccumulators:
    """Per-time means and standard errors of curvature statistics.

    Collected during simulation so they remain available when full
    per-path matrices are not stored (dim above the storage limit).
    ``mean_M`` tracks Q_t + int_0^t Q_s^2 ds, whose mean is constant in t
    for the exact process.
    """

    mean_Q: np.ndarray      # (K+1, d, d)
    se_Q: np.ndarray        # (K+1, d, d)
    mean_Qvv: np.ndarray    # (K+1, d, d): mean of Q + v (x) v
    se_Qvv: np.ndarray
    mean_M: np.ndarray      # (K+1, d, d)
    se_M: np.ndarray
    ito_rms: np.ndarray     # (K+1,): rms of v_t - v_0 - sum Q dB


@dataclass
class PathEnsemble:
    """Simulated bridge paths on a grid plus the exact terminal draw.

    ``X``/``v`` have shape (K+1, paths, dim) on the grid; ``X1``/``v1`` are
    the terminal values at time 1.  ``A`` stores the rescaled conditional
    covariances cov(mu_t) per (time, path) when dim allows, else None.
    Brownian increments reconstruct each Euler step exactly:
    X[k+1] = X[k] + v[k] dt_k + dB[k].
    """

    grid: np.ndarray
    epsilon: float
    seed: int
    scheme: str
    X: np.ndarray
    v: np.ndarray
    A: np.ndarray | None
    dB: np.ndarray
    X1: np.ndarray
    v1: np.ndarray
    q1: np.ndarray
    diagnostics: DiagnosticAccumulators
    target: GaussianMixture

    @property
    def n_paths(self) -> int:
        return self.X.shape[1]

    @property
    def n_steps(self) -> int:
        return len(self.grid) - 1

    @property
    def dim(self) -> int:
        return self.X.shape[2]

    def times_with_terminal(self) -> np.ndarray:
        return np.append(self.grid, 1.0)

    def curvature_at(self, k: int) -> np.ndarray:
        """Q at grid index k, derived from the stored covariance."""
        if self.A is None:
            raise ValueError("full matrices were not stored for this dimension")
        t = self.grid[k]
        return (self.A[k] - np.eye(self.dim)) / (1.0 - t)


def make_grid(n_steps: int, epsilon: float, scheme: str = "uniform") -> np.ndarray:
    end = 1.0 - epsilon
    if scheme == "uniform":
        return np.linspace(0.0, end, n_steps + 1)
    if scheme == "geometric":
        # steps shrink geometrically towards the right endpoint (16:1 span)
        q = (1.0 / 16.0) ** (1.0 / max(n_steps - 1, 1))
        deltas = q ** np.arange(n_steps)
        knots = np.concatenate([[0.0], np.cumsum(deltas)])
        return end * knots / knots[-1]
    raise ValueError(f"unknown grid scheme {scheme!r}")


def simulate_ensemble(mix: GaussianMixture, n_paths: int, n_steps: int,
                      epsilon: float = 1e-3, seed: int = 0,
                      scheme: str = "uniform") -> PathEnsemble:
    """Euler-Maruyama ensemble plus one exact conditional terminal draw.

    Brownian increments are drawn from one stream per path keyed by
    (seed, path index), so the ensemble is reproducible and independent of
    any execution order.
    """
    if n_steps < 8:
        raise ValueError("n_steps must be >= 8")
    if not 1e-6 <= epsilon <= 1e-2:
        raise ValueError("epsilon must lie in [1e-6, 1e-2]")
    d = mix.dim
    P = int(n_paths)
    grid = make_grid(n_steps, epsilon, scheme)
    K = n_steps
    deltas = np.diff(grid)

    # per-path streams: normals for increments, then terminal choice + draw
    dB = np.empty((K, P, d))
    term_u = np.empty(P)
    term_z = np.empty((P, d))
    for p in range(P):
        rng = stream(seed, "path", p)
        z = rng.standard_normal((K, d))
        dB[:, p, :] = z * np.sqrt(deltas)[:, None]
        term_u[p] = rng.uniform()
        term_z[p] = rng.standard_normal(d)

    store_full = d <= FULL_MATRIX_DIM_LIMIT
    X = np.empty((K + 1, P, d))
    v = np.empty((K + 1, P, d))
    A = np.empty((K + 1, P, d, d)) if store_full else None

    shape = (K + 1, d, d)
    acc = DiagnosticAccumulators(
        mean_Q=np.empty(shape), se_Q=np.empty(shape),
        mean_Qvv=np.empty(shape), se_Qvv=np.empty(shape),
        mean_M=np.empty(shape), se_M=np.empty(shape),
        ito_rms=np.empty(K + 1),
    )

    def record_acc(k, Qk, vk, intQ2, v_rec, v0):
        for target_mean, target_se, arr in (
            (acc.mean_Q, acc.se_Q, Qk),
            (acc.mean_Qvv, acc.se_Qvv, Qk + np.einsum("pa,pb->pab", vk, vk)),
            (acc.mean_M, acc.se_M, Qk + intQ2),
        ):
            target_mean[k] = arr.mean(axis=0)
            target_se[k] = arr.std(axis=0) / np.sqrt(P)
        resid = vk - v0[None, :] - v_rec
        acc.ito_rms[k] = float(np.sqrt(np.mean(np.sum(resid ** 2, axis=1))))

    eye = np.eye(d)
    X[0] = 0.0
    intQ2 = np.zeros((P, d, d))
    v_rec = np.zeros((P, d))
    v0 = None
    for k in range(K + 1):
        kernel = BridgeKernel(mix, grid[k])
        vk, Ak = kernel.stats(X[k])
        v[k] = vk
        if store_full:
            A[k] = Ak
        Qk = (Ak - eye) / (1.0 - grid[k])
        if v0 is None:
            v0 = vk[0].copy()
        record_acc(k, Qk, vk, intQ2, v_rec, v0)
        if k < K:
            dt = deltas[k]
            intQ2 = intQ2 + np.einsum("pab,pbc->pac", Qk, Qk) * dt
            v_rec = v_rec + np.einsum("pab,pb->pa", Qk, dB[k])
            X[k + 1] = X[k] + vk * dt + dB[k]
        else:
            terminal_kernel = kernel

    # exact terminal draw from the conditional law at 1 - eps
    r, eta = terminal_kernel.responsibilities(X[K])
    cum = np.cumsum(r, axis=1)
    comp = np.minimum((term_u[:, None] > cum).sum(axis=1), r.shape[1] - 1)
    X1 = np.empty((P, d))
    for j in range(mix.n_components):
        mask = comp == j
        if np.any(mask):
            X1[mask] = eta[mask, j] + term_z[mask] @ terminal_kernel.post_chols[j].T
    v1 = terminal_drift(mix, X1)
    q1 = terminal_curvature(mix, X1)

    return PathEnsemble(grid=grid, epsilon=float(epsilon), seed=int(seed),
                        scheme=scheme, X=X, v=v, A=A, dB=dB, X1=X1, v1=v1,
                        q1=q1, diagnostics=acc, target=mix)


# ----------------------------------------------------------------------
# path functionals and diagnostics
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class EnergyIdentities:
    entropy_path: Estimate
    deficit_path: Estimate


def energy_identities(ensemble: PathEnsemble) -> EnergyIdentities:
    """Trapezoidal path functionals matching entropy and deficit.

    entropy_path = (1/2) E int |v_t|^2 dt,
    deficit_path = (1/2) E int |v_1 - v_t|^2 dt,
    each with the Monte-Carlo standard error over paths.
    """
    times = ensemble.times_with_terminal()
    P = ensemble.n_paths
    vsq = np.einsum("kpa,kpa->kp", ensemble.v, ensemble.v)
    vsq = np.vstack([vsq, np.einsum("pa,pa->p", ensemble.v1, ensemble.v1)])
    ent = 0.5 * np.trapz(vsq, times, axis=0)
    gap = ensemble.v1[None, :, :] - ensemble.v
    gsq = np.einsum("kpa,kpa->kp", gap, gap)
    gsq = np.vstack([gsq, np.zeros(P)])
    dfc = 0.5 * np.trapz(gsq, times, axis=0)
    return EnergyIdentities(
        entropy_path=Estimate(float(ent.mean()), float(ent.std() / np.sqrt(P)),
                              MONTE_CARLO, P),
        deficit_path=Estimate(float(dfc.mean()), float(dfc.std() / np.sqrt(P)),
                              MONTE_CARLO, P),
    )


@dataclass
class FollmerDiagnostics:
    """Per-time statistics of the drift/curvature martingale structure.

    All arrays are indexed by the grid; ``z_*`` fields are residuals in
    units of their own standard errors (z-scores).
    """

    times: np.ndarray
    target_mean: np.ndarray
    mean_v: np.ndarray                 # (K+1, d)
    se_v: np.ndarray                   # (K+1, d)
    z_mean_drift: np.ndarray           # (K+1,) max over coords
    vsq_mean: np.ndarray               # (K+2,) includes terminal
    vsq_increment_mean: np.ndarray     # (K+1,)
    vsq_increment_se: np.ndarray       # (K+1,)
    monotonicity_violations: int
    prop_exp_resid: np.ndarray         # (K+1,) max-entry residual
    prop_exp_se: np.ndarray            # (K+1,) matching max-entry stderr
    ito_rms: np.ndarray                # (K+1,)
    qv_martingale_drift: np.ndarray    # (K+1,) max-entry drift of Q + int Q^2
    qv_martingale_se: np.ndarray
    dvsq_dt: np.ndarray                # (K+1,) centered differences
    trace_m_sq: np.ndarray             # (K+1,) Tr(m(t)^2), m = -E[Q]
    comparison_gap: np.ndarray         # (K+1,) eigmin of bound minus m(t)

    def to_rows(self):
        rows = []
        for k, t in enumerate(self.times):
            rows.append([
                float(t), float(self.z_mean_drift[k]), float(self.vsq_mean[k]),
                float(self.vsq_increment_mean[k]), float(self.vsq_increment_se[k]),
                float(self.prop_exp_resid[k]), float(self.prop_exp_se[k]),
                float(self.ito_rms[k]), float(self.qv_martingale_drift[k]),
                float(self.qv_martingale_se[k]), float(self.dvsq_dt[k]),
                float(self.trace_m_sq[k]), float(self.comparison_gap[k]),
            ])
        return rows


DIAGNOSTIC_COLUMNS = [
    "t", "z_mean_drift", "vsq_mean", "vsq_increment_mean", "vsq_increment_se",
    "prop_exp_resid", "prop_exp_se", "ito_rms", "qv_martingale_drift",
    "qv_martingale_se", "dvsq_dt", "trace_m_sq", "comparison_gap",
]


def martingale_diagnostics(ensemble: PathEnsemble,
                           mix: GaussianMixture | None = None) -> FollmerDiagnostics:
    """Residuals of every martingale identity the drift satisfies."""
    mix = mix or ensemble.target
    acc = ensemble.diagnostics
    K = ensemble.n_steps
    P = ensemble.n_paths
    d = ensemble.dim
    times = ensemble.grid

    target_mean, target_cov = mix.moments()
    second = target_cov + np.outer(target_mean, target_mean)

    mean_v = ensemble.v.mean(axis=1)
    se_v = ensemble.v.std(axis=1) / np.sqrt(P)
    resid_v = np.abs(mean_v - target_mean)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(se_v > 0, resid_v / se_v, np.where(resid_v <= 1e-9, 0.0, np.inf))
    z_mean_drift = z.max(axis=1)

    vsq = np.einsum("kpa,kpa->kp", ensemble.v, ensemble.v)
    vsq_full = np.vstack([vsq, np.einsum("pa,pa->p", ensemble.v1, ensemble.v1)])
    vsq_mean = vsq_full.mean(axis=1)
    inc = np.diff(vsq_full, axis=0)
    inc_mean = inc.mean(axis=1)
    inc_se = inc.std(axis=1) / np.sqrt(P)
    violations = int(np.sum(inc_mean < -3.0 * inc_se))

    prop_target = second - np.eye(d)
    prop_resid = np.abs(acc.mean_Qvv - prop_target).reshape(K + 1, -1)
    idx = prop_resid.argmax(axis=1)
    prop_exp_resid = prop_resid[np.arange(K + 1), idx]
    prop_exp_se = acc.se_Qvv.reshape(K + 1, -1)[np.arange(K + 1), idx]

    drift_M = np.abs(acc.mean_M - acc.mean_M[0]).reshape(K + 1, -1)
    idxm = drift_M.argmax(axis=1)
    qv_drift = drift_M[np.arange(K + 1), idxm]
    qv_se = (acc.se_M.reshape(K + 1, -1)[np.arange(K + 1), idxm]
             + np.abs(acc.se_M[0]).reshape(-1)[idxm])

    dvsq = np.gradient(vsq_mean[:K + 1], times)
    m_t = -acc.mean_Q
    trace_m_sq = np.einsum("kab,kba->k", m_t, m_t)

    # comparison with the terminal curvature: m(t) <= (m(1)^{-1} + (1-t))^{-1}
    m1 = -ensemble.q1.mean(axis=0)
    comparison_gap = np.full(K + 1, np.nan)
    eigs1 = np.linalg.eigvalsh(0.5 * (m1 + m1.T))
    if eigs1.min() > 1e-10:
        m1_inv = np.linalg.inv(0.5 * (m1 + m1.T))
        for k in range(K + 1):
            bound = np.linalg.inv(m1_inv + (1.0 - times[k]) * np.eye(d))
            gap = bound - m_t[k]
            comparison_gap[k] = float(np.linalg.eigvalsh(0.5 * (gap + gap.T))[0])

    return FollmerDiagnostics(
        times=times, target_mean=target_mean, mean_v=mean_v, se_v=se_v,
        z_mean_drift=z_mean_drift, vsq_mean=vsq_mean,
        vsq_increment_mean=inc_mean, vsq_increment_se=inc_se,
        monotonicity_violations=violations,
        prop_exp_resid=prop_exp_resid, prop_exp_se=prop_exp_se,
        ito_rms=acc.ito_rms, qv_martingale_drift=qv_drift, qv_martingale_se=qv_se,
        dvsq_dt=dvsq, trace_m_sq=trace_m_sq, comparison_gap=comparison_gap,
    )


# ----------------------------------------------------------------------
# localization: endpoint reconstruction and per-time deficits
# ----------------------------------------------------------------------

@dataclass
class LocalizationReport:
    """Residuals of the endpoint stochastic-integral representation and
    the time-localized deficit inequality."""

    dat_residuals: np.ndarray          # (P,) conditional-mean reconstruction
    dat_residuals_terminal: np.ndarray # (P,) against the exact terminal draw
    defrep_lhs: Estimate               # int_0^1 E[deficit(mu_t)] dt
    defrep_rhs: Estimate               # deficit of the target (path route)
    defrep_holds: bool
    per_time_deficit: np.ndarray       # (K+1,) identity route
    direct_times: np.ndarray | None
    direct_deficit: np.ndarray | None

    @property
    def dat_residual_median(self) -> float:
        return float(np.median(self.dat_residuals))


def localization_checks(ensemble: PathEnsemble, mix: GaussianMixture | None = None,
                        direct_subsample: int = 256,
                        direct_times: int = 9,
                        budget: Budget | None = None) -> LocalizationReport:
    """Endpoint reconstruction residual plus localized-deficit accounting.

    The reconstruction target is the conditional mean of the endpoint at
    the final grid time, X_k + (1-t_k) v_k, so the residual measures pure
    Euler discretization error with no terminal-draw noise floor.

    The per-time deficit uses the identity
        E[deficit(mu_t)] = (1/2) int_t^1 E|v_1 - v_s|^2 ds,
    and, in one dimension, an independent direct route: the deficit of the
    rescaled posterior mixture by quadrature on a path subsample.
    """
    mix = mix or ensemble.target
    if ensemble.A is None:
        raise ValueError("localization requires stored covariance matrices")
    P = ensemble.n_paths
    K = ensemble.n_steps
    times = ensemble.times_with_terminal()
    target_mean, _ = mix.moments()

    recon = target_mean[None, :] + np.einsum("kpab,kpb->pa", ensemble.A[:K], ensemble.dB)
    cond_mean = ensemble.X[K] + (1.0 - ensemble.grid[K]) * ensemble.v[K]
    dat_res = np.linalg.norm(cond_mean - recon, axis=1)
    dat_res_term = np.linalg.norm(ensemble.X1 - recon, axis=1)

    gap = ensemble.v1[None, :, :] - ensemble.v
    gsq = np.einsum("kpa,kpa->kp", gap, gap)
    gsq_full = np.vstack([gsq, np.zeros(P)])
    weighted = times[:, None] * gsq_full
    lhs_per_path = 0.5 * np.trapz(weighted, times, axis=0)
    lhs = Estimate(float(lhs_per_path.mean()),
                   float(lhs_per_path.std() / np.sqrt(P)), MONTE_CARLO, P)
    dfc_per_path = 0.5 * np.trapz(gsq_full, times, axis=0)
    rhs = Estimate(float(dfc_per_path.mean()),
                   float(dfc_per_path.std() / np.sqrt(P)), MONTE_CARLO, P)
    holds = lhs.value <= rhs.value + lhs.abs_error + rhs.abs_error

    # identity route per grid time: (1/2) int_t^1 E|v_1 - v_s|^2 ds
    g_mean = gsq_full.mean(axis=1)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (g_mean[1:] + g_mean[:-1]) * np.diff(times))])
    per_time = 0.5 * (cum[-1] - cum[:K + 1])

    dtimes = None
    dvals = None
    if mix.dim == 1 and direct_times > 0:
        budget = budget or Budget(quad_tol=1e-7)
        sel = np.linspace(0, K, direct_times, dtype=int)
        sub = np.linspace(0, P - 1, min(direct_subsample, P), dtype=int)
        dvals = np.empty(len(sel))
        for i, k in enumerate(sel):
            t = float(ensemble.grid[k])
            kernel = BridgeKernel(mix, t)
            r, eta = kernel.responsibilities(ensemble.X[k, sub])
            scale = np.sqrt(1.0 - t)
            vals = np.empty(len(sub))
            for a in range(len(sub)):
                keep = r[a] > POSTERIOR_WEIGHT_FLOOR
                w = r[a, keep] / r[a, keep].sum()
                posterior = GaussianMixture(
                    1, w, (eta[a, keep] - ensemble.X[k, sub[a]]) / scale,
                    kernel.post_covs[keep] / (1.0 - t))
                vals[a] = deficit_functional(posterior, budget).value
            dvals[i] = vals.mean()
        dtimes = ensemble.grid[sel]

    return LocalizationReport(
        dat_residuals=dat_res, dat_residuals_terminal=dat_res_term,
        defrep_lhs=lhs, defrep_rhs=rhs, defrep_holds=bool(holds),
        per_time_deficit=per_time, direct_times=dtimes, direct_deficit=dvals)


def residual_order_study(mix: GaussianMixture, n_paths: int,
                         steps_pair=(512, 1024), epsilon: float = 1e-3,
                         seed: int = 0) -> dict:
    """Median endpoint-reconstruction residual at two grid resolutions.

    Returns the two medians and their ratio; an Euler-order scheme should
    shrink the residual by roughly sqrt(2) when steps double.
    """
    medians = []
    for steps in steps_pair:
        ens = simulate_ensemble(mix, n_paths, steps, epsilon, seed)
        rep = localization_checks(ens, mix, direct_times=0)
        medians.append(rep.dat_residual_median)
        del ens
    return {"steps": list(steps_pair), "medians": medians,
            "ratio": medians[0] / medians[1] if medians[1] > 0 else float("inf")}
