"""Figure rendering for experiment outputs.

Plots are generated from the delimited files only, never from in-memory run
state, so any figure can be regenerated offline from the CSVs. The SVG
output is deterministic: the element-id hash salt is pinned and no creation
date is embedded.
"""

from __future__ import annotations

from collections import defaultdict
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

__all__ = ["plot_gap_curves", "plot_history"]

plt.rcParams["svg.hashsalt"] = "drnash"

_SAVE_KW = {"metadata": {"Date": None}, "bbox_inches": "tight"}


def _mean_curves(rows: Sequence[Mapping[str, str]]) -> dict[int, list[tuple[int, float]]]:
    by_key: dict[tuple[int, int], list[float]] = defaultdict(list)
    for row in rows:
        by_key[(int(row["batch_size"]), int(row["T"]))].append(float(row["gap"]))
    curves: dict[int, list[tuple[int, float]]] = defaultdict(list)
    for (b, T), gaps in sorted(by_key.items()):
        curves[b].append((T, sum(gaps) / len(gaps)))
    return dict(curves)


def plot_gap_curves(rows: Sequence[Mapping[str, str]], path: str | Path) -> None:
    """Render mean gap against iterations, one line per batch size.

    ``rows`` are parsed ``gap_curve.csv`` records with fields ``batch_size``,
    ``seed``, ``T``, ``gap``; values may still be strings.
    """
    curves = _mean_curves(rows)
    if not curves:
        raise ValueError("no rows to plot")
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for b, curve in sorted(curves.items()):
        ts = [t for t, _ in curve]
        gaps = [g for _, g in curve]
        ax.plot(ts, gaps, marker="o", markersize=3.5, label=f"batch size {b}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("iterations")
    ax.set_ylabel("restricted gap of the averaged iterate")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def plot_history(rows: Sequence[Mapping[str, str]], path: str | Path, label: str = "") -> None:
    """Render iterate norms and distance to the final point over a run.

    ``rows`` are parsed ``history_<seed>_<b>.csv`` records.
    """
    ts = [int(row["t"]) for row in rows]
    if not ts:
        raise ValueError("no rows to plot")
    x_norm = [float(row["x_norm"]) for row in rows]
    dist = [float(row["dist_to_final"]) for row in rows]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    ax.plot(ts, x_norm, marker="o", markersize=3.5, label="strategy norm")
    positive = [(t, d) for t, d in zip(ts, dist) if d > 0]
    if positive:
        ax.plot(*zip(*positive), marker="s", markersize=3.5, label="distance to final")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("iterations")
    ax.set_ylabel("norm")
    if label:
        ax.set_title(label)
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
