"""Render figures for run and sweep outputs next to the CSV files."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np


def save_run_figure(per_seed_records, metric_name: str, path) -> None:
    """Learning curves: evaluation metric against simulated time, one line
    per seed."""
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for seed, records in per_seed_records.items():
        xs = [r.clock for r in records if r.metric is not None]
        ys = [r.metric for r in records if r.metric is not None]
        if xs:
            ax.plot(xs, ys, marker=".", markersize=3, alpha=0.85, label=f"seed {seed}")
    ax.set_xlabel("simulated time")
    ax.set_ylabel(metric_name)
    ax.set_title(f"{metric_name} over training")
    ax.grid(alpha=0.3)
    if len(per_seed_records) <= 12:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_sweep_figure(rows, axis: str, metric_name: str, path) -> None:
    """Seed-mean final metric (with std error bars) against the swept axis."""
    by_value: dict[float, list[float]] = {}
    for row in rows:
        if row["final_metric"] is not None:
            by_value.setdefault(row["value"], []).append(row["final_metric"])
    values = sorted(by_value)
    means = np.array([np.mean(by_value[v]) for v in values])
    stds = np.array([np.std(by_value[v]) for v in values])
    fig, ax = plt.subplots(figsize=(6.5, 4.5))
    ax.errorbar(values, means, yerr=stds, marker="o", capsize=3)
    ax.set_xlabel(axis)
    ax.set_ylabel(f"final {metric_name}")
    ax.set_title(f"final {metric_name} vs {axis}")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
