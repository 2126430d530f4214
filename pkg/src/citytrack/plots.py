"""Matplotlib figures written next to the evaluation reports."""

from __future__ import annotations

import os
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .postprocess import DispersionStat  # noqa: E402


def _save(fig, path) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return str(path)


def plot_pr_curves(curves: Mapping[str, tuple[np.ndarray, np.ndarray]], path,
                   ap: Mapping[str, float] | None = None) -> str:
    fig, ax = plt.subplots(figsize=(5, 4))
    for cam, (recall, precision) in curves.items():
        label = cam if ap is None else f"{cam} (AP {ap[cam]:.3f})"
        ax.step(np.concatenate([[0.0], recall]), np.concatenate([[1.0], precision]), where="post", label=label)
    ax.set_xlim(0, 1.02)
    ax.set_ylim(0, 1.02)
    ax.set_xlabel("recall")
    ax.set_ylabel("precision")
    if curves:
        ax.legend(fontsize=8, loc="lower left")
    return _save(fig, path)


def plot_id_scores(rows: Sequence[dict], path) -> str:
    """Grouped IDF1 / IDP / IDR bars per camera plus the Average row."""
    fig, ax = plt.subplots(figsize=(max(4, 1.1 * len(rows) + 2), 4))
    x = np.arange(len(rows))
    width = 0.27
    for i, key in enumerate(("idf1", "idp", "idr")):
        ax.bar(x + (i - 1) * width, [float(r[key]) for r in rows], width, label=key.upper())
    ax.set_xticks(x)
    ax.set_xticklabels([r["camera"] for r in rows])
    ax.set_ylim(0, 1.05)
    ax.legend(fontsize=8, ncol=3)
    return _save(fig, path)


def plot_dispersion(stats: Sequence[DispersionStat], threshold: float, path) -> str:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    vals = np.array([s.dispersion for s in stats], dtype=float)
    ax.hist(np.log10(vals + 1.0), bins=30, color="0.6")
    ax.axvline(np.log10(threshold + 1.0), color="r", ls="--", label=f"threshold {threshold:g} px$^2$")
    ax.set_xlabel("log10(1 + centre dispersion [px$^2$])")
    ax.set_ylabel("tracks")
    ax.legend(fontsize=8)
    return _save(fig, path)
