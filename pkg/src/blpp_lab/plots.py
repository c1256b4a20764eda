"""Figure rendering for the CLI report path.

Every figure lands next to its data file; data files stay the canonical
output and are byte-reproducible, figures are presentation only.
"""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def _save(fig, out_path) -> None:
    fig.tight_layout()
    fig.savefig(out_path, dpi=150)
    plt.close(fig)


def plot_bundle(times, components, labels, out_path, title="coupled components"):
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for vals, lbl in zip(components, labels):
        ax.plot(times, vals, lw=0.8, label=lbl)
    ax.set_xlabel("t")
    ax.set_ylabel("value")
    ax.set_title(title)
    ax.legend(fontsize=8)
    _save(fig, out_path)


def plot_jump_stats(lams, estimates, stderrs, out_path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(lams, estimates, yerr=stderrs, fmt="o-", ms=3, lw=1)
    ax.set_xlabel("drift grid upper end")
    ax.set_ylabel("mean detected jumps")
    ax.set_title("jump counts across the drift grid")
    _save(fig, out_path)


def plot_cdf(z, F, out_path, lam, t):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(z, F, lw=1.2)
    ax.set_xlabel("z")
    ax.set_ylabel("F(z)")
    ax.set_title(f"increment distribution, lam={lam}, t={t}")
    ax.set_ylim(0, 1.02)
    _save(fig, out_path)


def plot_identity_report(names, discrepancies, out_path, tol=1e-9):
    fig, ax = plt.subplots(figsize=(6.5, 4))
    x = np.arange(len(names))
    vals = np.maximum(np.asarray(discrepancies, dtype=float), 1e-18)
    ax.bar(x, vals, color="C0")
    ax.axhline(tol, color="C3", ls="--", lw=1, label=f"tolerance {tol:g}")
    ax.set_yscale("log")
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("max relative discrepancy")
    ax.set_title("deterministic identity suite")
    ax.legend()
    _save(fig, out_path)


def plot_geodesics(traces, out_path):
    """Staircase plot of (level, tau) jump sequences."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for levels, taus, label in traces:
        xs, ys = [], []
        for i in range(len(levels)):
            xs.extend([taus[i], taus[min(i + 1, len(taus) - 1)]])
            ys.extend([levels[i], levels[i]])
        ax.plot(taus, levels, drawstyle="steps-post", lw=1, label=label)
    ax.set_xlabel("t")
    ax.set_ylabel("level")
    ax.set_title("geodesic traces")
    ax.legend(fontsize=8)
    _save(fig, out_path)


def plot_competition_interface(levels, sig_l, sig_r, out_path):
    fig, ax = plt.subplots(figsize=(6, 4.5))
    ax.plot(sig_l, levels, drawstyle="steps-pre", label="left")
    ax.plot(sig_r, levels, drawstyle="steps-pre", label="right")
    ax.set_xlabel("crossing time")
    ax.set_ylabel("level")
    ax.set_title("competition interface crossings")
    ax.legend()
    _save(fig, out_path)


def plot_dimension_fit(scales, counts, slope, r2, out_path):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.loglog(1.0 / np.asarray(scales), counts, "o", ms=4)
    x = np.log(1.0 / np.asarray(scales, dtype=float))
    y = np.log(np.asarray(counts, dtype=float))
    b = y.mean() - slope * x.mean()
    xx = np.linspace(x.min(), x.max(), 50)
    ax.plot(np.exp(xx), np.exp(slope * xx + b), "-", lw=1,
            label=f"slope {slope:.3f} (r2={r2:.3f})")
    ax.set_xlabel("1/delta")
    ax.set_ylabel("box count")
    ax.set_title("box-counting fit")
    ax.legend()
    _save(fig, out_path)


def plot_ks_trend(ks_table, out_path):
    """ks_table: list of (k, ks)."""
    fig, ax = plt.subplots(figsize=(6, 4))
    ks = np.array(ks_table, dtype=float)
    ax.loglog(ks[:, 0], ks[:, 1], "o-", lw=1)
    ax.set_xlabel("k")
    ax.set_ylabel("KS distance")
    ax.set_title("diffusive-scaling convergence")
    _save(fig, out_path)
