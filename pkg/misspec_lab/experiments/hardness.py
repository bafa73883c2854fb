from __future__ import annotations

import itertools
from pathlib import Path
from typing import Any

import numpy as np

from misspec_lab.core.config import HardnessConfig
from misspec_lab.core.errors import HardnessOverflowError
from misspec_lab.core.experiment import BaseExperiment
from misspec_lab.experiments import register_experiment
from misspec_lab.hypothesis.jl import embed_unit_vectors, hardness_count, jl_feature_matrix, scaled_hard_instance
from misspec_lab.results.tables import write_table
from misspec_lab.sweep.runner import Cell, CellResult

# Instances up to this many rows are built and certified, larger ones only counted.
CERTIFY_LIMIT = 2000


@register_experiment("hardness")
class HardnessExperiment(BaseExperiment):
    """Action counts of the scaled hard instance over (d, ε/δ), plus one certified JL instance."""

    config_cls = HardnessConfig
    config: HardnessConfig

    def build_cells(self) -> list[Cell]:
        grid = itertools.product(self.config.d_grid, self.config.ratio_grid)
        cells = [
            Cell(cell_id=f"count-d{d}-r{r:g}", index=i, params={"kind": "count", "d": d, "ratio": r})
            for i, (d, r) in enumerate(grid)
        ]
        cells.append(Cell(cell_id="jl", index=len(cells), params={"kind": "jl"}))
        return cells

    def run_cell(self, cell: Cell) -> dict[str, Any]:
        if cell.params["kind"] == "jl":
            inst = jl_feature_matrix(self.config.jl_k, self.config.jl_epsilon, self.rng(cell))
            rewards = embed_unit_vectors(inst)
            return {"kind": "jl", "inst": inst, "errors": [float(np.max(np.abs(r.delta))) for r in rewards]}

        d, ratio = cell.params["d"], cell.params["ratio"]
        row: dict[str, Any] = {"d": d, "ratio": ratio, "k": None, "max_inner": None, "certified": None}
        # δ = 1 so that ε is the ratio itself.
        try:
            k = hardness_count(d, ratio, 1.0)
        except HardnessOverflowError:
            return {"kind": "count", "row": {**row, "status": "overflow"}}
        row["k"] = k
        if 2 <= k <= CERTIFY_LIMIT:
            inst, rewards = scaled_hard_instance(d, ratio, 1.0, self.rng(cell), max_rows=CERTIFY_LIMIT)
            row["max_inner"] = inst.max_inner
            row["certified"] = all(r.residual(inst.phi) <= 1e-9 for r in rewards)
        return {"kind": "count", "row": {**row, "status": "ok"}}

    def summarize(self, payload: dict[str, Any]) -> dict[str, Any]:
        if payload["kind"] == "jl":
            return {"d": payload["inst"].d, "max_inner": round(payload["inst"].max_inner, 6)}
        return {"k": payload["row"]["k"]}

    def write_tables(self, results: list[CellResult]) -> list[Path]:
        counts, jl_rows, embed_rows = [], [], []
        for res in results:
            if not res.ok:
                if res.cell.params["kind"] == "count":
                    counts.append({"d": res.cell.params["d"], "ratio": res.cell.params["ratio"], "status": "failed"})
                continue
            p = res.payload
            if p["kind"] == "count":
                counts.append(p["row"])
                continue
            inst = p["inst"]
            jl_rows.append(
                {
                    "k": inst.k,
                    "d": inst.d,
                    "epsilon": inst.epsilon,
                    "max_inner": inst.max_inner,
                    "certified": inst.max_inner <= inst.epsilon,
                }
            )
            embed_rows.extend(
                {"row": i, "max_abs_delta": e, "within": e <= inst.epsilon}
                for i, e in enumerate(p["errors"])
            )
        return [
            write_table(counts, self.out_dir / "hardness.csv"),
            write_table(jl_rows, self.out_dir / "jl_instance.csv"),
            write_table(embed_rows, self.out_dir / "embeddings.csv"),
        ]
