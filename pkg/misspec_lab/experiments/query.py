from __future__ import annotations

import logging
import math
from pathlib import Path
from typing import Any

import numpy as np

from misspec_lab.core.config import QueryConfig
from misspec_lab.core.experiment import BaseExperiment
from misspec_lab.core.types import FeatureMatrix
from misspec_lab.design.frank_wolfe import frank_wolfe_design
from misspec_lab.experiments import register_experiment
from misspec_lab.hypothesis.amplification import lambda_q
from misspec_lab.hypothesis.jl import random_misspecified_reward
from misspec_lab.query.environment import QueryEnvironment
from misspec_lab.query.learners import LP_SLACK, design_learner, probe_and_fit, random_probe_learner
from misspec_lab.query.oracle import MAX_ACTIONS, brute_force_est_complexity
from misspec_lab.results.plots import plot_error_histogram
from misspec_lab.results.tables import write_table
from misspec_lab.sweep.runner import Cell, CellResult

logger = logging.getLogger(__name__)

DESIGN_BLOCK = 100


def _unit_rows(rng: np.random.Generator, k: int, d: int) -> FeatureMatrix:
    X = rng.standard_normal((k, d))
    return FeatureMatrix(entries=X / np.linalg.norm(X, axis=1, keepdims=True))


@register_experiment("query")
class QueryExperiment(BaseExperiment):
    """
    Query-game tables: needle query counts of the random-order learner, λ_q
    with the probe-and-fit error it controls, and design-learner errors on
    worst-case misspecified rewards.
    """

    config_cls = QueryConfig
    config: QueryConfig

    def build_cells(self) -> list[Cell]:
        cfg = self.config
        specs: list[tuple[str, dict[str, Any]]] = []
        specs += [(f"needle-k{k}", {"kind": "needle", "k": k}) for k in cfg.needle_ks]
        specs += [(f"lambda-{i}", {"kind": "lambda", "instance": i}) for i in range(cfg.lambda_instances)]
        for start in range(0, cfg.design_trials, DESIGN_BLOCK):
            stop = min(start + DESIGN_BLOCK, cfg.design_trials)
            specs.append((f"design-{start}", {"kind": "design", "start": start, "stop": stop}))
        return [Cell(cell_id=cid, index=i, params=p) for i, (cid, p) in enumerate(specs)]

    def run_cell(self, cell: Cell) -> dict[str, Any]:
        kind = cell.params["kind"]
        if kind == "needle":
            return self._needle(cell)
        if kind == "lambda":
            return self._lambda(cell)
        return self._design(cell)

    def _needle(self, cell: Cell) -> dict[str, Any]:
        k = cell.params["k"]
        rng = self.rng(cell)
        stars = rng.integers(0, k, size=self.config.trials)
        counts = np.empty(stars.size, dtype=np.int64)
        for t, star in enumerate(stars):
            mu = np.zeros(k)
            mu[star] = 1.0
            counts[t] = random_probe_learner(k, QueryEnvironment(mu), rng).queries_used
        worst = None
        if k <= MAX_ACTIONS:
            worst = brute_force_est_complexity(np.eye(k), 0.5)
        return {"kind": "needle", "k": k, "counts": counts, "deterministic_worst_case": worst}

    def _lambda(self, cell: Cell) -> dict[str, Any]:
        cfg = self.config
        rng = self.rng(cell)
        phi = _unit_rows(rng, cfg.lambda_k, cfg.lambda_d)
        reward = random_misspecified_reward(phi, cfg.epsilon, rng, worst_case=True)
        rows = []
        for q in sorted(cfg.lambda_qs):
            lam = lambda_q(phi, q)
            out = probe_and_fit(phi, q, cfg.epsilon, QueryEnvironment(reward.mu), subset=lam.subset)
            rows.append(
                {
                    "instance": cell.params["instance"],
                    "q": q,
                    "lambda_q": lam.value,
                    "subset": " ".join(str(i) for i in lam.subset),
                    "error": float(np.max(np.abs(out.mu_hat - reward.mu))),
                    "bound": cfg.epsilon * (1.0 + 2.0 * lam.value),
                }
            )
        for prev, cur in zip(rows, rows[1:]):
            cur["monotone"] = cur["lambda_q"] <= prev["lambda_q"] + LP_SLACK
        rows[0]["monotone"] = True
        return {"kind": "lambda", "rows": rows}

    def _design(self, cell: Cell) -> dict[str, Any]:
        cfg = self.config
        rng = self.rng(cell)
        rows = []
        for trial in range(cell.params["start"], cell.params["stop"]):
            phi = _unit_rows(rng, cfg.design_k, cfg.design_d)
            reward = random_misspecified_reward(phi, cfg.epsilon, rng, worst_case=True)
            rho, cert = frank_wolfe_design(phi)
            out = design_learner(phi, rho, QueryEnvironment(reward.mu))
            rows.append(
                {
                    "trial": trial,
                    "g_value": cert.g_value,
                    "support_size": cert.support_size,
                    "error": float(np.max(np.abs(out.mu_hat - reward.mu))),
                    "bound": cfg.epsilon * (1.0 + math.sqrt(cert.g_value)),
                    "bound_2d": cfg.epsilon * (1.0 + math.sqrt(2 * cfg.design_d)),
                }
            )
        return {"kind": "design", "rows": rows}

    def summarize(self, payload: dict[str, Any]) -> dict[str, Any]:
        if payload["kind"] == "needle":
            return {"mean_queries": round(float(payload["counts"].mean()), 4)}
        return {"rows": len(payload["rows"])}

    def _design_rows(self, results: list[CellResult]) -> list[dict[str, Any]]:
        return [row for r in results if r.ok and r.payload["kind"] == "design" for row in r.payload["rows"]]

    def write_tables(self, results: list[CellResult]) -> list[Path]:
        needle, lam = [], []
        for res in results:
            if not res.ok:
                logger.warning("cell %s failed and is missing from the tables", res.cell.cell_id)
                continue
            p = res.payload
            if p["kind"] == "needle":
                k, counts = p["k"], p["counts"]
                expected = (k + 1) / 2
                needle.append(
                    {
                        "k": k,
                        "trials": counts.size,
                        "mean_queries": counts.mean(),
                        "std_queries": counts.std(ddof=1) if counts.size > 1 else 0.0,
                        "expected": expected,
                        "relative_error": abs(counts.mean() - expected) / expected,
                        "deterministic_worst_case": p["deterministic_worst_case"],
                    }
                )
            elif p["kind"] == "lambda":
                lam.extend(p["rows"])
        for row in lam:
            row["within_bound"] = row["error"] <= row["bound"] + LP_SLACK
        design = self._design_rows(results)
        for row in design:
            row["within_bound"] = row["error"] <= row["bound"] + 1e-9
        return [
            write_table(needle, self.out_dir / "needle_queries.csv"),
            write_table(lam, self.out_dir / "lambda_q.csv"),
            write_table(design, self.out_dir / "design_errors.csv"),
        ]

    def plot(self, results: list[CellResult]) -> list[Path]:
        design = self._design_rows(results)
        if not design or min(r["bound"] for r in design) <= 0:
            return []
        errors = np.array([r["error"] for r in design])
        bounds = np.array([r["bound"] for r in design])
        return [plot_error_histogram(errors, bounds, self.out_dir / "design_errors.png")]
