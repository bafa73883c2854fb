from __future__ import annotations

import logging
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from misspec_lab.core.config import RLConfig
from misspec_lab.core.experiment import BaseExperiment
from misspec_lab.experiments import register_experiment
from misspec_lab.results.plots import plot_value_gaps
from misspec_lab.results.tables import write_table
from misspec_lab.rl.api import ApiOverrides, api_core_set, propagation_bound
from misspec_lab.rl.features import build_q_features
from misspec_lab.rl.mdp import TabularMDP, random_mdp, read_mdp
from misspec_lab.sweep.runner import Cell, CellResult

logger = logging.getLogger(__name__)


@register_experiment("rl")
class RLExperiment(BaseExperiment):
    """Approximate policy iteration on random or loaded MDPs, checked against exact oracles."""

    config_cls = RLConfig
    config: RLConfig

    def build_cells(self) -> list[Cell]:
        n = 1 if self.config.mdp_path is not None else self.config.n_mdps
        return [Cell(cell_id=f"mdp-{i}", index=i, params={"mdp": i}) for i in range(n)]

    def _mdp(self, rng: np.random.Generator) -> TabularMDP:
        cfg = self.config
        if cfg.mdp_path is not None:
            return read_mdp(cfg.mdp_path)
        return random_mdp(cfg.S, cfg.A, cfg.gamma, rng)

    def run_cell(self, cell: Cell) -> dict[str, Any]:
        cfg = self.config
        rng = self.rng(cell)
        mdp = self._mdp(rng)
        features = build_q_features(mdp, cfg.features, min(cfg.d, mdp.n_pairs), rng)
        if cfg.epsilon is not None:
            eps, source = cfg.epsilon, "config"
        elif features.epsilon < cfg.epsilon_floor:
            eps, source = cfg.epsilon_floor, "floor"
            logger.info(
                "%s: measured ε %.4g is below the floor, running API with ε = %.4g",
                cell.cell_id, features.epsilon, eps,
            )
        else:
            eps, source = features.epsilon, "measured"
        overrides = ApiOverrides(k=cfg.k, m=cfg.m, n=cfg.n)
        _, diag = api_core_set(mdp, features.phi, eps, cfg.alpha, rng, overrides)
        check = None
        if cfg.propagation_check:
            check = propagation_bound(mdp, diag.policies, diag.q_tables)
            if not check.holds:
                logger.warning("%s: propagation inequality fails by %.3g", cell.cell_id, -check.rhs_min_slack)
        return {
            "mdp": mdp,
            "features": features,
            "epsilon": eps,
            "epsilon_source": source,
            "diag": diag,
            "propagation": check,
        }

    def summarize(self, payload: dict[str, Any]) -> dict[str, Any]:
        diag = payload["diag"]
        return {"value_gap": round(diag.value_gap, 6), "samples": diag.samples}

    def write_tables(self, results: list[CellResult]) -> list[Path]:
        iter_rows, gap_rows, sample_rows = [], [], []
        for res in results:
            i = res.cell.index
            if not res.ok:
                gap_rows.append({"mdp": i, "status": "failed"})
                continue
            p = res.payload
            mdp, diag = p["mdp"], p["diag"]
            params = diag.parameters
            for rec in diag.iterations:
                iter_rows.append(
                    {
                        "mdp": i,
                        **rec.model_dump(),
                        "bound_slack": rec.extrapolation_bound - rec.extrapolation_error,
                    }
                )
            check = p["propagation"]
            gap_rows.append(
                {
                    "mdp": i,
                    "S": mdp.S,
                    "A": mdp.A,
                    "gamma": mdp.gamma,
                    "d": p["features"].phi.d,
                    "measured_epsilon": p["features"].epsilon,
                    "epsilon_used": p["epsilon"],
                    "epsilon_source": p["epsilon_source"],
                    "delta": diag.delta,
                    "core_size": diag.core_set.size,
                    "design_g": diag.design_g,
                    "value_gap": diag.value_gap,
                    "value_gap_bound": diag.value_gap_bound,
                    "within_bound": diag.value_gap <= diag.value_gap_bound,
                    "final_suboptimality": diag.final_suboptimality,
                    "failure_probability": diag.failure_probability,
                    "propagation_holds": None if check is None else check.holds,
                    "status": "ok",
                }
            )
            ledger = params.k * params.m * params.n * diag.core_set.size
            sample_rows.append(
                {
                    "mdp": i,
                    "k": params.k,
                    "m": params.m,
                    "n": params.n,
                    "core_size": diag.core_set.size,
                    "samples": diag.samples,
                    "ledger": ledger,
                    "matches": diag.samples == ledger,
                }
            )
        return [
            write_table(iter_rows, self.out_dir / "iterations.csv"),
            write_table(gap_rows, self.out_dir / "value_gap.csv"),
            write_table(sample_rows, self.out_dir / "samples.csv"),
        ]

    def plot(self, results: list[CellResult]) -> list[Path]:
        rows = [
            {
                "mdp": r.cell.index,
                "value_gap": max(r.payload["diag"].value_gap, 1e-16),
                "value_gap_bound": r.payload["diag"].value_gap_bound,
            }
            for r in results
            if r.ok
        ]
        if not rows:
            return []
        return [plot_value_gaps(pd.DataFrame(rows), self.out_dir / "value_gap.png")]
