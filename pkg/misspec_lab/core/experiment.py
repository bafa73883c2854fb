from __future__ import annotations

import logging
import uuid
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Any, ClassVar

import numpy as np
from pydantic import BaseModel

from misspec_lab.core.config import ExperimentConfig, echo_config, resolve_out_dir
from misspec_lab.core.errors import MisspecLabError
from misspec_lab.core.rng import stream
from misspec_lab.logging.run_log import RunLogger
from misspec_lab.sweep.runner import Cell, CellResult, SweepRunner

logger = logging.getLogger(__name__)


class RunSummary(BaseModel):
    run_id: str
    out_dir: Path
    files: list[str]
    failed_cells: int
    total_cells: int


class BaseExperiment(ABC):
    """
    Abstract base class for every CLI subcommand.

    Subclasses must implement:
      - build_cells()  : split the config into independent cells
      - run_cell()     : compute one cell (runs in a worker thread)
      - write_tables() : turn the cell results into CSV files

    and may override plot() to render figures from the same results.
    """

    name: ClassVar[str] = ""
    config_cls: ClassVar[type[ExperimentConfig]] = ExperimentConfig

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.run_id: str = str(uuid.uuid4())[:8]
        self.out_dir: Path = resolve_out_dir(config, self.name, self.run_id)
        self.run_log: RunLogger | None = None

    def rng(self, cell: Cell) -> np.random.Generator:
        """The cell's own stream: (root seed, cell index)."""
        return stream(self.config.seed, cell.index)

    async def run(self) -> RunSummary:
        """Main experiment loop."""
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.run_log = RunLogger(self.out_dir)
        config_path = echo_config(self.config, self.name, self.out_dir)
        self.run_log.log_run_start(
            self.run_id, self.name, self.config.model_dump(mode="json", exclude={"out_dir"})
        )

        cells = self.build_cells()
        runner = SweepRunner(jobs=self.config.jobs, run_log=self.run_log)
        results = await runner.run(cells, self.run_cell, summarize=self.summarize)
        failed = sum(not r.ok for r in results)
        if cells and failed == len(cells):
            self.run_log.log_run_end([], failed, status="failed")
            raise MisspecLabError(f"all {failed} cells failed; first error: {results[0].error}")

        files = [config_path] + self.write_tables(results)
        if self.config.plots:
            try:
                files += self.plot(results)
            except Exception as exc:
                logger.warning("plotting failed, data files are unaffected: %s", exc)
        names = [str(p.relative_to(self.out_dir)) for p in files]
        self.run_log.log_run_end(names, failed)
        return RunSummary(
            run_id=self.run_id,
            out_dir=self.out_dir,
            files=names,
            failed_cells=failed,
            total_cells=len(cells),
        )

    def summarize(self, payload: Any) -> dict[str, Any]:
        """Short per-cell record for the run log."""
        return {}

    # --- Abstract methods ---

    @abstractmethod
    def build_cells(self) -> list[Cell]:
        ...

    @abstractmethod
    def run_cell(self, cell: Cell) -> Any:
        ...

    @abstractmethod
    def write_tables(self, results: list[CellResult]) -> list[Path]:
        ...

    def plot(self, results: list[CellResult]) -> list[Path]:
        return []
