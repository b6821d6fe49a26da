"""Figure rendering for CLI reports.

Each experiment that emits a table can also render a small matplotlib
figure next to it.  Figures are written to files only (Agg backend); they
summarize, never replace, the delimited output.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def render_bound_reports(reports, path) -> str:
    """Horizontal slack chart, one bar per inequality."""
    names = [r.name for r in reports]
    slacks = [r.slack for r in reports]
    colors = ["#2ca02c" if r.holds else "#d62728" for r in reports]
    fig, ax = plt.subplots(figsize=(7, 0.4 * len(reports) + 1.5))
    y = np.arange(len(reports))
    ax.barh(y, slacks, color=colors)
    ax.set_yticks(y)
    ax.set_yticklabels(names)
    ax.axvline(0.0, color="k", lw=0.8)
    ax.set_xlabel("slack (canonical direction)")
    ax.set_xscale("symlog", linthresh=1e-10)
    ax.set_title("inequality slacks")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def render_follmer_diagnostics(diag, path) -> str:
    """Drift energy and martingale residual time series."""
    fig, axes = plt.subplots(2, 2, figsize=(10, 7))
    t = diag.times
    axes[0, 0].plot(np.append(t, 1.0), diag.vsq_mean, lw=1.2)
    axes[0, 0].set_title(r"E|v_t|^2 (nondecreasing for a martingale)")
    axes[0, 0].set_xlabel("t")

    axes[0, 1].plot(t, diag.prop_exp_resid, label="residual", lw=1.0)
    axes[0, 1].plot(t, 4 * diag.prop_exp_se, "--", label="4 stderr", lw=1.0)
    axes[0, 1].set_title("curvature-mean identity residual")
    axes[0, 1].set_xlabel("t")
    axes[0, 1].legend()

    axes[1, 0].plot(t, diag.ito_rms, lw=1.0)
    axes[1, 0].set_title("drift reconstruction rms (stochastic integral)")
    axes[1, 0].set_xlabel("t")

    axes[1, 1].plot(t, diag.dvsq_dt, label="d/dt E|v|^2", lw=1.0)
    axes[1, 1].plot(t, diag.trace_m_sq, "--", label="Tr(m(t)^2)", lw=1.0)
    axes[1, 1].set_title("energy dissipation rate")
    axes[1, 1].set_xlabel("t")
    axes[1, 1].legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def render_sweep(rows, family, path) -> str:
    """Log-log scaling trends over the family parameter."""
    ks = np.array([r["k"] for r in rows], dtype=float)
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    axes[0].loglog(ks, [r["deficit_upper"] for r in rows], "o-", label="deficit upper")
    axes[0].loglog(ks, [r["variance"] for r in rows], "s-", label="variance")
    if rows[0]["measured_deficit"] is not None:
        axes[0].loglog(ks, [r["measured_deficit"] for r in rows], "x--",
                       label="measured deficit")
    axes[0].set_xlabel("k")
    axes[0].legend()
    axes[0].set_title(f"{family}: deficit vs variance")

    axes[1].loglog(ks, [r["tensor_deficit_upper"] for r in rows], "o-",
                   label="n(k) x deficit upper")
    axes[1].loglog(ks, [r["tensor_w2_lower"] for r in rows], "s-",
                   label="n(k) x W2^2 lower")
    axes[1].set_xlabel("k")
    axes[1].legend()
    axes[1].set_title("tensorized totals")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)


def render_decomposition_samples(samples_by_name: dict, path) -> str:
    """Overlaid histograms (1d) or scatter (2d) of decomposition outputs."""
    first = next(iter(samples_by_name.values()))
    dim = first.shape[1]
    fig, ax = plt.subplots(figsize=(7, 4.5))
    if dim == 1:
        for name, pts in samples_by_name.items():
            ax.hist(pts[:, 0], bins=80, density=True, histtype="step", label=name)
        ax.set_xlabel("x")
    else:
        for name, pts in samples_by_name.items():
            ax.scatter(pts[:, 0], pts[:, 1], s=4, alpha=0.4, label=name)
        ax.set_xlabel("x0")
        ax.set_ylabel("x1")
    ax.legend()
    ax.set_title("decomposition sample sets")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return str(path)
