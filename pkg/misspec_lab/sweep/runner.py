from __future__ import annotations

import asyncio
import logging
from typing import Any, Callable

from pydantic import BaseModel

from misspec_lab.logging.run_log import RunLogger

logger = logging.getLogger(__name__)


class Cell(BaseModel):
    """One independent unit of work. ``index`` selects its random stream."""

    cell_id: str
    index: int
    params: dict[str, Any] = {}


class CellResult(BaseModel):
    cell: Cell
    status: str = "ok"
    error: str | None = None
    payload: Any = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


class SweepRunner:
    """Run cells in worker threads, at most ``jobs`` at a time, keeping input order."""

    def __init__(self, jobs: int = 1, run_log: RunLogger | None = None):
        if jobs < 1:
            raise ValueError("jobs must be at least 1")
        self.jobs = jobs
        self.run_log = run_log

    async def run(
        self,
        cells: list[Cell],
        fn: Callable[[Cell], Any],
        summarize: Callable[[Any], dict[str, Any]] | None = None,
    ) -> list[CellResult]:
        semaphore = asyncio.Semaphore(self.jobs)

        async def one(cell: Cell) -> CellResult:
            async with semaphore:
                if self.run_log:
                    self.run_log.log_cell_start(cell.cell_id, cell.params)
                try:
                    payload = await asyncio.to_thread(fn, cell)
                except Exception as exc:
                    logger.warning("cell %s failed: %s", cell.cell_id, exc)
                    if self.run_log:
                        self.run_log.log_cell_failed(cell.cell_id, f"{type(exc).__name__}: {exc}")
                    return CellResult(cell=cell, status="failed", error=str(exc))
                if self.run_log:
                    self.run_log.log_cell_end(cell.cell_id, summarize(payload) if summarize else {})
                return CellResult(cell=cell, payload=payload)

        return list(await asyncio.gather(*(one(c) for c in cells)))
