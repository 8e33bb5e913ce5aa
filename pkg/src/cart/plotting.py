"""PNG figures for run and suite outputs (headless Agg backend)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _finish(fig, path, description=None):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata={"Description": description} if description else None)
    plt.close(fig)
    return path


def plot_trajectories(results: dict, spec, path, description=None):
    """Planar projection of every agent path, one color per policy.

    ``results`` maps a label to a :class:`~cart.sim.RunResult`.
    """
    fig, ax = plt.subplots(figsize=(5.5, 5.5))
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    radius = spec.safety.r_s + spec.safety.delta_r_s
    for obs in np.asarray(spec.obstacles).reshape(-1, spec.dim):
        ax.add_patch(plt.Circle(obs[:2], radius, color="0.6", alpha=0.5))
    for c, (label, res) in zip(colors * 4, results.items()):
        for i in range(res.positions.shape[1]):
            ax.plot(res.positions[:, i, 0], res.positions[:, i, 1], color=c, lw=1.2,
                    label=label if i == 0 else None)
            bad = np.flatnonzero(res.min_h_series < 0)
            if bad.size:
                k = bad[0]
                ax.plot(res.positions[k, i, 0], res.positions[k, i, 1], "x", color=c, ms=9, mew=2)
        if res.goals is not None:
            ax.plot(res.goals[:, 0], res.goals[:, 1], "*", color="k", ms=8)
    ax.set_aspect("equal")
    ax.set_xlabel("x")
    ax.set_ylabel("y")
    ax.legend(fontsize=8)
    return _finish(fig, path, description)


def plot_min_h(results: dict, path, description=None):
    """Smallest pairwise clearance over time; below zero is a collision."""
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for label, res in results.items():
        ax.plot(res.times, res.min_h_series, label=label, lw=1.2)
    ax.axhline(0.0, color="k", lw=0.8, ls="--")
    ax.set_xlabel("t")
    ax.set_ylabel("min h")
    ax.legend(fontsize=8)
    return _finish(fig, path, description)


def plot_envelope(check, path, description=None):
    """Monte Carlo composite error against its analytic bound, plus exceedance."""
    fig, (a0, a1) = plt.subplots(1, 2, figsize=(9, 3.5))
    a0.plot(check.times, check.mean_s, label="mean |s|")
    a0.plot(check.times, check.s_bound, "--", label="bound")
    a0.set_xlabel("t")
    a0.legend(fontsize=8)
    a1.plot(check.times, check.exceed_prob, label=f"P(|e| > {check.D_s:.3g})")
    a1.plot(check.times, np.minimum(1.0, check.prob_bound), "--", label="bound")
    a1.set_xlabel("t")
    a1.legend(fontsize=8)
    return _finish(fig, path, description)
