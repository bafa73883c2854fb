from __future__ import annotations

import itertools
import logging
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from misspec_lab.bandit.elimination import phased_elimination, phased_elimination_known_eps
from misspec_lab.bandit.instances import (
    BanditInstance,
    ContextSequence,
    Noise,
    failure_instance,
    lower_bound_instance,
    random_bandit_instance,
    random_context_sequence,
    regret_envelope,
)
from misspec_lab.bandit.linucb import linucb, linucb_modified
from misspec_lab.bandit.trace import BanditTrace
from misspec_lab.core.config import CONTEXTUAL_ALGOS, BanditSweepConfig
from misspec_lab.core.experiment import BaseExperiment
from misspec_lab.core.rng import stream
from misspec_lab.experiments import register_experiment
from misspec_lab.results.plots import plot_regret_curves, plot_regret_vs_n
from misspec_lab.results.tables import downsample_curve, trace_frame, write_table
from misspec_lab.sweep.runner import Cell, CellResult

logger = logging.getLogger(__name__)

# Instance streams live above every cell index: (root, INSTANCE_STREAM + seed).
INSTANCE_STREAM = 1 << 32

SUMMARY_COLUMNS = [
    "seed", "n", "k", "d", "epsilon", "algo", "final_regret", "envelope_ratio",
    "max_bias", "bias_ok", "near_optimal_ok", "bonus_ok", "status",
]


@register_experiment("bandit")
class BanditSweepExperiment(BaseExperiment):
    """Regret sweeps over (ε, n, algo, seed) for one preset."""

    config_cls = BanditSweepConfig
    config: BanditSweepConfig

    def build_cells(self) -> list[Cell]:
        cfg = self.config
        seeds = 1 if cfg.preset == "failure" else cfg.seeds
        grid = itertools.product(cfg.epsilon_grid, cfg.n_grid, cfg.algos, range(seeds))
        return [
            Cell(
                cell_id=f"{cfg.preset}-eps{eps:g}-n{n}-{algo}-s{s}",
                index=i,
                params={"epsilon": eps, "n": n, "algo": algo, "seed": s},
            )
            for i, (eps, n, algo, s) in enumerate(grid)
        ]

    # The instance depends on (ε, seed) only, so every algo and horizon sees the same one.
    def _instance(self, eps: float, s: int, n: int) -> BanditInstance | ContextSequence:
        cfg = self.config
        rng = stream(cfg.seed, INSTANCE_STREAM + s)
        noise = Noise(kind=cfg.noise, scale=cfg.noise_scale)
        if cfg.preset == "failure":
            return failure_instance(eps, n)
        if cfg.preset == "contextual":
            return random_context_sequence(n, cfg.k_t, cfg.d, eps, rng, noise=noise)
        if cfg.preset == "lower_bound":
            return lower_bound_instance(cfg.k, cfg.d, s % cfg.k, epsilon=eps or 1.0, seed=rng, noise=noise)
        return random_bandit_instance(
            cfg.k, cfg.d, eps, rng,
            min_gap=cfg.min_gap, worst_case=cfg.preset == "misspecified", noise=noise,
        )

    def run_cell(self, cell: Cell) -> dict[str, Any]:
        p = cell.params
        eps, n, algo = p["epsilon"], p["n"], p["algo"]
        inst = self._instance(eps, p["seed"], n)
        rng = self.rng(cell)
        if algo == "linucb":
            trace = linucb(inst, n, seed=rng, track_bonus=True)
        elif algo == "linucb_modified":
            trace = linucb_modified(inst, n, epsilon=eps, seed=rng)
        elif algo == "phased_elimination_known_eps":
            trace = phased_elimination_known_eps(inst, n, self.config.alpha, inst.epsilon, rng)
        else:
            trace = phased_elimination(inst, n, self.config.alpha, rng)
        k = inst.k if isinstance(inst, BanditInstance) else max(X.shape[0] for X in inst.pool)
        d = inst.d
        return {"trace": trace, "k": k, "d": d, "epsilon": float(getattr(inst, "epsilon", eps))}

    def summarize(self, payload: dict[str, Any]) -> dict[str, Any]:
        return {"regret": round(payload["trace"].final_regret, 6)}

    def _summary_row(self, res: CellResult) -> dict[str, Any]:
        p = res.cell.params
        row: dict[str, Any] = {
            "seed": p["seed"], "n": p["n"], "k": self.config.k, "d": self.config.d,
            "epsilon": p["epsilon"], "algo": p["algo"],
        }
        if not res.ok:
            return {**row, "status": "failed"}
        trace: BanditTrace = res.payload["trace"]
        k, d, eps = res.payload["k"], res.payload["d"], res.payload["epsilon"]
        env = regret_envelope(p["n"], d, max(k, 2), eps)
        row.update(k=k, d=d, final_regret=trace.final_regret, envelope_ratio=trace.final_regret / env)
        scored = [e for e in trace.episodes if e.bias is not None]
        if scored:
            row["max_bias"] = max(e.bias for e in scored)
            row["bias_ok"] = all(e.design_fallback or e.bias <= e.bias_bound + 1e-9 for e in scored)
            row["near_optimal_ok"] = all(
                e.near_optimal_retained for e in scored if e.best_active_eliminated
            )
        if trace.bonus_sum is not None:
            row["bonus_ok"] = trace.bonus_sum <= trace.bonus_bound + 1e-9
        row["status"] = "ok"
        return row

    def write_tables(self, results: list[CellResult]) -> list[Path]:
        files: list[Path] = []
        if self.config.write_traces:
            for res in results:
                if res.ok:
                    path = self.out_dir / "traces" / f"{res.cell.cell_id}.csv"
                    files.append(write_table(trace_frame(res.payload["trace"]), path))
        summary = pd.DataFrame([self._summary_row(r) for r in results], columns=SUMMARY_COLUMNS)
        files.append(write_table(summary, self.out_dir / "summary.csv"))
        files.append(write_table(mean_regret_table(summary), self.out_dir / "regret_table.csv"))
        return files

    def plot(self, results: list[CellResult]) -> list[Path]:
        cfg = self.config
        if cfg.preset == "failure":
            curves = {}
            for res in results:
                if res.ok and res.cell.params["n"] == max(cfg.n_grid):
                    label = f"{res.cell.params['algo']} ε={res.cell.params['epsilon']:g}"
                    curves[label] = downsample_curve(res.payload["trace"].cumulative_regret)
            return [plot_regret_curves(curves, self.out_dir / "regret_curves.png", "Failure instance")]
        summary = pd.DataFrame([self._summary_row(r) for r in results], columns=SUMMARY_COLUMNS)
        env_rows = []
        for eps, n in itertools.product(cfg.epsilon_grid, sorted(cfg.n_grid)):
            k = cfg.k_t if cfg.preset in ("contextual",) else cfg.k
            env_rows.append({"epsilon": eps, "n": n, "envelope": regret_envelope(n, cfg.d, max(k, 2), eps)})
        paths = [plot_regret_vs_n(summary, pd.DataFrame(env_rows), self.out_dir / "regret_vs_n.png")]
        if cfg.preset == "contextual" or set(cfg.algos) <= set(CONTEXTUAL_ALGOS):
            return paths
        n_max = max(cfg.n_grid)
        curves = {}
        for res in results:
            q = res.cell.params
            if res.ok and q["n"] == n_max and q["seed"] == 0:
                curves[f"{q['algo']} ε={q['epsilon']:g}"] = downsample_curve(
                    res.payload["trace"].cumulative_regret
                )
        if curves:
            paths.append(plot_regret_curves(curves, self.out_dir / "regret_curves.png", f"n = {n_max}, seed 0"))
        return paths


def mean_regret_table(summary: pd.DataFrame) -> pd.DataFrame:
    """Mean and spread of final regret per (algo, ε, n), with R_n/√(dn log(nk))."""
    ok = summary[summary["status"] == "ok"].astype({"final_regret": float, "n": float, "k": float, "d": float})
    ok["normalised"] = ok["final_regret"] / np.sqrt(ok["d"] * ok["n"] * np.log(ok["n"] * ok["k"]))
    return (
        ok.groupby(["algo", "epsilon", "n"])
        .agg(mean_regret=("final_regret", "mean"), std_regret=("final_regret", "std"),
             mean_normalised=("normalised", "mean"), runs=("final_regret", "size"))
        .reset_index()
    )

