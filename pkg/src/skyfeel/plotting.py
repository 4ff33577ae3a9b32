"""Figures for the CLI report paths.  Always rendered off-screen."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .latency import compute_time, sensing_time, upload_time  # noqa: E402


def _save(fig, path):
    fig.tight_layout()
    # fixed metadata keeps PNG bytes stable between runs
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def latency_breakdown(plan, path):
    """Stacked per-UAV bars: sensing, local compute, expected upload."""
    cp = plan.compute_params()
    delta = np.asarray(plan.delta, dtype=float)
    rates = np.asarray(plan.rates_bps, dtype=float)
    sense = sensing_time(delta, cp)
    comp = plan.q_s * compute_time(delta, True, cp)
    upl = plan.q_s * upload_time(rates, True, cp)
    k = np.arange(1, delta.size + 1)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(k, sense, label="sensing")
    ax.bar(k, comp, bottom=sense, label="compute (expected)")
    ax.bar(k, upl, bottom=sense + comp, label="upload (expected)")
    ax.axhline(plan.t_max_s, color="k", lw=0.8, ls="--", label="round budget")
    ax.set_xlabel("UAV")
    ax.set_ylabel("latency per round (s)")
    ax.set_title(f"{plan.preset}: N={plan.n_rounds}, total {plan.objective_s:.1f} s")
    ax.legend(fontsize=8, loc="lower right")
    _save(fig, path)


def gap_curve(time_s, gap, path, se=None, bound=None, label="mean gap"):
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(time_s, gap, label=label)
    if se is not None:
        ax.fill_between(time_s, gap - 1.96 * se, gap + 1.96 * se, alpha=0.25, lw=0)
    if bound is not None:
        ax.plot(time_s, bound, "k--", lw=0.8, label="convergence bound")
    ax.set_yscale("log")
    ax.set_xlabel("wall-clock time (s)")
    ax.set_ylabel("optimality gap")
    ax.legend(fontsize=8)
    _save(fig, path)


def psnr_curve(sweep, path):
    a = np.array([r[0] for r in sweep])
    p = np.array([r[1] for r in sweep])
    fin = np.isfinite(p)
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(a[fin], p[fin], "o-")
    ax.set_xlabel("elevation angle (deg)")
    ax.set_ylabel("PSNR vs overhead frame (dB)")
    ax.grid(alpha=0.3)
    _save(fig, path)
