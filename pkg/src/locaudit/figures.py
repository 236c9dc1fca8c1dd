"""Figure rendering for the CLI report path.

Each function renders one PNG next to the delimited output it
visualizes.  Rendering uses the Agg backend so it works headless.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluation import RocCurve
from .mlp import MlpModel


def render_roc(roc: RocCurve, path, title: str = "ROC") -> None:
    """Linear and log-log ROC panels with the chance diagonal."""
    points = np.array(roc.points)
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    for ax in (ax1, ax2):
        ax.plot(points[:, 0], points[:, 1], drawstyle="steps-post")
        ax.plot([1e-6, 1], [1e-6, 1], linestyle="--", color="gray", linewidth=0.8)
        ax.set_xlabel("false positive rate")
        ax.set_ylabel("true positive rate")
    ax2.set_xscale("log")
    ax2.set_yscale("log")
    floor = max(points[points[:, 0] > 0, 0].min(initial=1e-3), 1e-6)
    ax2.set_xlim(floor, 1)
    ax2.set_ylim(floor, 1)
    ax1.set_title(f"{title} (AUC = {roc.auc:.4f})")
    ax2.set_title("log-log")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_sweep(rows: list[dict], path, x_label: str = "positive observations") -> None:
    """Accuracy vs the swept variable, one line per attack, with 95% bands."""
    fig, ax = plt.subplots(figsize=(6, 4))
    attacks = sorted({r["attack"] for r in rows})
    for attack in attacks:
        sub = [r for r in rows if r["attack"] == attack]
        x = [r["k"] for r in sub]
        y = [r["accuracy"] for r in sub]
        ax.plot(x, y, marker="o", label=attack)
        ax.fill_between(
            x, [r["ci_low"] for r in sub], [r["ci_high"] for r in sub], alpha=0.2
        )
    ax.set_xlabel(x_label)
    ax.set_ylabel("attack accuracy")
    ax.set_ylim(0.45, 1.02)
    ax.axhline(0.5, linestyle=":", color="gray", linewidth=0.8)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_bound(rows: list[dict], path) -> None:
    """Expected-accuracy bound (and empirical accuracy when present) vs k."""
    fig, ax = plt.subplots(figsize=(6, 4))
    x = [r["k"] for r in rows]
    ax.plot(x, [r["expected_bound"] for r in rows], marker="s", label="expected bound")
    if "empirical_accuracy" in rows[0]:
        ax.plot(
            x,
            [r["empirical_accuracy"] for r in rows],
            marker="o",
            label="empirical accuracy",
        )
    ax.set_xlabel("observations k")
    ax.set_ylabel("accuracy")
    ax.set_ylim(0.45, 1.02)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_weights(model: MlpModel, path) -> None:
    """First-layer weight heatmap plus hidden-bias profile."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    im = ax1.imshow(model.hidden_weights[:-1], aspect="auto", cmap="coolwarm")
    fig.colorbar(im, ax=ax1, shrink=0.8)
    ax1.set_title("first-layer weights")
    ax1.set_xlabel("hidden unit")
    ax1.set_ylabel("input")
    ax2.plot(model.hidden_weights[-1], marker=".")
    ax2.set_title("hidden biases")
    ax2.set_xlabel("hidden unit")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
