"""Figure rendering for the report path.

Every ``verify`` and ``sweep`` invocation writes PNG diagnostics next to
its JSON/CSV output: a generic observed-vs-theory panel for any report,
plus specialized views where a single panel tells the story (empirical
density against the Gaussian limit, the scaled-occupation trend, the
sweep heat map).
"""

from __future__ import annotations

import os
from typing import Sequence, Union

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .analysis import ExperimentReport
from .theory import limit_density

__all__ = [
    "report_figure",
    "slln_figure",
    "trend_figure",
    "sweep_figure",
    "figures_for_report",
]

_PathLike = Union[str, os.PathLike]


def report_figure(report: ExperimentReport, path: _PathLike) -> None:
    """Observed values with 4-SE bars against their theoretical targets."""
    stats = report.statistics
    if not stats:
        return
    fig, ax = plt.subplots(figsize=(7.0, 0.6 * len(stats) + 1.6))
    ypos = np.arange(len(stats))[::-1]
    for y, s in zip(ypos, stats):
        color = "tab:green" if s.passed else "tab:red"
        if s.se is not None:
            ax.errorbar([s.observed], [y], xerr=[4 * s.se], fmt="o",
                        color=color, capsize=3)
        else:
            ax.plot([s.observed], [y], "o", color=color)
        if s.theoretical is not None:
            ax.plot([s.theoretical], [y], "k|", markersize=14)
    ax.set_yticks(ypos)
    ax.set_yticklabels([s.name for s in stats], fontsize=8)
    ax.set_xlabel("observed (dot, 4 SE bar) vs theory (tick)")
    ax.set_title(f"{report.experiment}: "
                 f"{'pass' if report.passed else 'FAIL'} "
                 f"({report.replicates} replicates)")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def slln_figure(relative_coords: np.ndarray, gamma_plus_b: float,
                path: _PathLike) -> None:
    """Histogram of relative first coordinates against the limit density."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.hist(relative_coords, bins=60, density=True, alpha=0.6,
            color="tab:blue", label="empirical")
    grid = np.linspace(relative_coords.min() - 0.5, relative_coords.max() + 0.5, 400)
    dens = [limit_density([y], gamma_plus_b, 1) for y in grid]
    ax.plot(grid, dens, "k-", lw=1.5, label="limit density")
    ax.set_xlabel("relative position (first coordinate)")
    ax.set_ylabel("density")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def trend_figure(n_values: Sequence[int], scaled: Sequence[float], target: float,
                 path: _PathLike, ylabel: str = "scaled occupation") -> None:
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    ax.plot(list(n_values), list(scaled), "o-", color="tab:blue")
    ax.axhline(target, color="k", ls="--", lw=1, label=f"target {target:g}")
    ax.set_xlabel("generation")
    ax.set_ylabel(ylabel)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def sweep_figure(rows: Sequence[dict], path: _PathLike,
                 value_key: str = "log_occupation_slope") -> None:
    """Scatter of a per-cell statistic over the (b, gamma) grid."""
    if not rows:
        return
    bs = np.array([r["b"] for r in rows])
    gs = np.array([r["gamma"] for r in rows])
    vals = np.array([r[value_key] for r in rows])
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    finite = np.isfinite(vals)
    sc = ax.scatter(bs[finite], gs[finite], c=vals[finite], s=160, cmap="coolwarm",
                    edgecolors="k")
    if np.any(~finite):
        ax.scatter(bs[~finite], gs[~finite], marker="x", color="gray", s=120,
                   label="empty")
        ax.legend()
    fig.colorbar(sc, ax=ax, label=value_key)
    ax.set_xlabel("b")
    ax.set_ylabel("gamma")
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def figures_for_report(report: ExperimentReport, out_dir: _PathLike,
                       stem: str) -> list[str]:
    """Render the generic panel plus any specialized view; returns paths."""
    out_dir = os.fspath(out_dir)
    paths = [os.path.join(out_dir, f"{stem}_report.png")]
    report_figure(report, paths[0])
    if report.experiment == "case2_watanabe":
        pairs = [(int(s.name.split("n=")[1]), s.observed)
                 for s in report.statistics if s.name.startswith("scaled mass")]
        if pairs:
            p = os.path.join(out_dir, f"{stem}_trend.png")
            trend_figure([n for n, _ in pairs], [v for _, v in pairs],
                         report.statistics[0].theoretical or 2.0, p)
            paths.append(p)
    elif report.experiment == "slln":
        p = os.path.join(out_dir, f"{stem}_density.png")
        _slln_figure_from_params(report.params, p)
        paths.append(p)
    return paths


def _slln_figure_from_params(params_doc: dict, path: _PathLike) -> None:
    """One illustrative run at the report's parameters for the histogram."""
    from .model import ModelParams
    from .simulate import run

    params = ModelParams(d=int(params_doc["d"]), b=float(params_doc["b"]),
                         gamma=float(params_doc["gamma"]),
                         horizon_m=int(params_doc["horizon_m"]),
                         seed=int(params_doc["seed"]))
    final = run(params)[-1]
    rel = final.positions[:, 0] - final.positions[:, 0].mean()
    slln_figure(rel, params.gamma + params.b, path)
