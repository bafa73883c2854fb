from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402


def _save(fig: plt.Figure, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_leverage_profile(leverages: np.ndarray, d: int, path: Path) -> Path:
    """Sorted leverages aᵀG⁻¹a with the d and 2d reference lines."""
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(np.sort(leverages)[::-1], marker=".", linestyle="none")
    ax.axhline(d, color="tab:green", linestyle="--", label="d")
    ax.axhline(2 * d, color="tab:red", linestyle=":", label="2d")
    ax.set_xlabel("row (sorted)")
    ax.set_ylabel("leverage")
    ax.set_title("Leverage profile of the computed design")
    ax.legend()
    ax.grid(True)
    return _save(fig, path)


def plot_regret_vs_n(summary: pd.DataFrame, envelope: pd.DataFrame, path: Path) -> Path:
    """Mean final regret per (algo, ε) against n, with the theoretical envelope dashed."""
    fig, ax = plt.subplots(figsize=(8, 5))
    ok = summary[summary["status"] == "ok"].astype({"final_regret": float, "n": int})
    for (algo, eps), grp in ok.groupby(["algo", "epsilon"]):
        mean = grp.groupby("n")["final_regret"].mean()
        ax.plot(mean.index, mean.values, marker="o", label=f"{algo} ε={eps:g}")
    for eps, grp in envelope.groupby("epsilon"):
        ax.plot(grp["n"], grp["envelope"], linestyle="--", color="gray", label=f"envelope ε={eps:g}")
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("n")
    ax.set_ylabel("mean regret")
    ax.set_title("Regret against horizon")
    ax.legend(fontsize="small")
    ax.grid(True, which="both")
    return _save(fig, path)


def plot_regret_curves(curves: dict[str, tuple[np.ndarray, np.ndarray]], path: Path, title: str) -> Path:
    """Cumulative regret against round for each labelled run."""
    fig, ax = plt.subplots(figsize=(8, 5))
    for label, (rounds, regret) in curves.items():
        ax.plot(rounds, regret, label=label)
    ax.set_xlabel("round")
    ax.set_ylabel("cumulative regret")
    ax.set_title(title)
    ax.legend()
    ax.grid(True)
    return _save(fig, path)


def plot_value_gaps(gaps: pd.DataFrame, path: Path) -> Path:
    """Measured value gap next to its proof-chain bound, one pair of bars per MDP."""
    fig, ax = plt.subplots(figsize=(8, 4))
    x = np.arange(len(gaps))
    ax.bar(x - 0.2, gaps["value_gap"], width=0.4, label="max_s V* − V^π")
    ax.bar(x + 0.2, gaps["value_gap_bound"], width=0.4, label="bound")
    ax.set_yscale("log")
    ax.set_xticks(x, [str(m) for m in gaps["mdp"]])
    ax.set_xlabel("mdp")
    ax.set_title("Value gap of the returned policy")
    ax.legend()
    return _save(fig, path)


def plot_error_histogram(errors: np.ndarray, bound: np.ndarray, path: Path) -> Path:
    """Histogram of estimation error as a fraction of its bound."""
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.hist(errors / bound, bins=40)
    ax.axvline(1.0, color="tab:red", linestyle="--", label="bound")
    ax.set_xlabel("‖μ̂ − μ‖∞ / bound")
    ax.set_ylabel("trials")
    ax.set_title("Design-learner estimation error")
    ax.legend()
    return _save(fig, path)
