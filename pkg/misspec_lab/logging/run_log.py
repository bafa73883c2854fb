from __future__ import annotations

import json
from datetime import datetime, timezone
from pathlib import Path
from typing import Any


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


class RunLogger:
    """Logs an experiment run as JSON events + a human-readable transcript."""

    def __init__(self, run_dir: str | Path):
        self.run_dir = Path(run_dir)
        self.run_dir.mkdir(parents=True, exist_ok=True)
        self.events: list[dict[str, Any]] = []
        self.run_id: str = ""

    def log_run_start(self, run_id: str, experiment: str, config: dict[str, Any]):
        self.run_id = run_id
        self.events.append(
            {
                "event": "run_start",
                "run_id": run_id,
                "experiment": experiment,
                "config": config,
                "timestamp": _now(),
            }
        )

    def log_cell_start(self, cell_id: str, params: dict[str, Any]):
        self.events.append(
            {"event": "cell_start", "cell_id": cell_id, "params": params, "timestamp": _now()}
        )

    def log_cell_end(self, cell_id: str, summary: dict[str, Any]):
        self.events.append(
            {"event": "cell_end", "cell_id": cell_id, "summary": summary, "timestamp": _now()}
        )

    def log_cell_failed(self, cell_id: str, error: str):
        self.events.append(
            {"event": "cell_failed", "cell_id": cell_id, "error": error, "timestamp": _now()}
        )

    def log_run_end(self, files: list[str], failed: int, status: str = "ok"):
        self.events.append(
            {
                "event": "run_end",
                "status": status,
                "files": files,
                "failed_cells": failed,
                "timestamp": _now(),
            }
        )
        self._write()

    def _write(self):
        with open(self.run_dir / "run.json", "w") as f:
            json.dump(self.events, f, indent=2, default=str)

        with open(self.run_dir / "run.txt", "w") as f:
            for event in self.events:
                kind = event["event"]
                if kind == "run_start":
                    f.write(f"=== RUN {event['run_id']} ({event['experiment']}) ===\n")
                    for key, value in sorted(event["config"].items()):
                        f.write(f"  {key}: {value}\n")
                    f.write("\n")
                elif kind == "cell_start":
                    f.write(f"  [{event['cell_id']}] start {event['params']}\n")
                elif kind == "cell_end":
                    f.write(f"  [{event['cell_id']}] done  {event['summary']}\n")
                elif kind == "cell_failed":
                    f.write(f"  [{event['cell_id']}] FAILED: {event['error']}\n")
                elif kind == "run_end":
                    f.write(f"\n=== RUN {event['status'].upper()} ===\n")
                    f.write(f"  Failed cells: {event['failed_cells']}\n")
                    for name in event["files"]:
                        f.write(f"  Wrote: {name}\n")
