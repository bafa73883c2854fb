from __future__ import annotations

from pathlib import Path
from typing import Any

import numpy as np

from misspec_lab.core.config import DesignConfig
from misspec_lab.core.experiment import BaseExperiment
from misspec_lab.core.types import FeatureMatrix
from misspec_lab.design.frank_wolfe import (
    FrankWolfeOptions,
    frank_wolfe_design,
    kw_certificate,
    leverages,
)
from misspec_lab.design.span import reduce_to_span
from misspec_lab.experiments import register_experiment
from misspec_lab.hypothesis.io import read_feature_csv
from misspec_lab.hypothesis.jl import jl_feature_matrix
from misspec_lab.results.plots import plot_leverage_profile
from misspec_lab.results.tables import write_table
from misspec_lab.sweep.runner import Cell, CellResult


@register_experiment("design")
class DesignExperiment(BaseExperiment):
    """Frank–Wolfe designs on generated or loaded feature matrices."""

    config_cls = DesignConfig
    config: DesignConfig

    def build_cells(self) -> list[Cell]:
        n = 1 if self.config.generator in ("identity", "file") else self.config.instances
        return [Cell(cell_id=f"instance-{i}", index=i, params={"instance": i}) for i in range(n)]

    def _features(self, cell: Cell) -> FeatureMatrix:
        cfg = self.config
        if cfg.generator == "identity":
            return FeatureMatrix(entries=np.eye(cfg.d))
        if cfg.generator == "file":
            phi, _ = read_feature_csv(cfg.path, validate=False)
        elif cfg.generator == "jl":
            phi = jl_feature_matrix(cfg.k, cfg.epsilon, self.rng(cell)).phi
        else:
            X = self.rng(cell).standard_normal((cfg.k, cfg.d))
            return FeatureMatrix(entries=X / np.linalg.norm(X, axis=1, keepdims=True))
        # Near-orthogonal rows usually span fewer than d dimensions.
        Z, _ = reduce_to_span(phi.entries)
        return FeatureMatrix(entries=Z)

    def run_cell(self, cell: Cell) -> dict[str, Any]:
        cfg = self.config
        phi = self._features(cell)
        target = cfg.target_g if cfg.target_g is not None and phi.d == cfg.d else None
        rho, cert = frank_wolfe_design(
            phi,
            target_g=target,
            max_support=cfg.max_support if phi.d == cfg.d else None,
            max_iters=cfg.max_iters,
            options=FrankWolfeOptions(away_steps=cfg.away_steps),
        )
        optimal, _ = kw_certificate(phi, rho, tol=1e-6)
        return {
            "k": phi.k,
            "d": phi.d,
            "rho": rho,
            "cert": cert,
            "leverages": leverages(phi, rho),
            "kw_optimal": optimal,
        }

    def summarize(self, payload: dict[str, Any]) -> dict[str, Any]:
        cert = payload["cert"]
        return {"g": round(cert.g_value, 6), "support": cert.support_size}

    def write_tables(self, results: list[CellResult]) -> list[Path]:
        design_rows, cert_rows = [], []
        for res in results:
            i = res.cell.index
            if not res.ok:
                cert_rows.append({"instance": i, "status": "failed"})
                continue
            p = res.payload
            for row, w in p["rho"].weights.items():
                design_rows.append(
                    {"instance": i, "row_index": row, "weight": w, "leverage": p["leverages"][row]}
                )
            cert = p["cert"]
            cert_rows.append(
                {
                    "instance": i,
                    "k": p["k"],
                    "d": p["d"],
                    "g_value": cert.g_value,
                    "support_size": cert.support_size,
                    "iterations": cert.iterations,
                    "log_det": cert.log_det,
                    "target_g": cert.target_g,
                    "kw_optimal": p["kw_optimal"],
                    "status": "ok",
                }
            )
        return [
            write_table(design_rows, self.out_dir / "design.csv",
                        columns=["instance", "row_index", "weight", "leverage"]),
            write_table(cert_rows, self.out_dir / "certificate.csv"),
        ]

    def plot(self, results: list[CellResult]) -> list[Path]:
        first = next((r for r in results if r.ok), None)
        if first is None:
            return []
        return [
            plot_leverage_profile(
                first.payload["leverages"], first.payload["d"], self.out_dir / "leverage_profile.png"
            )
        ]
