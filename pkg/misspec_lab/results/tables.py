from __future__ import annotations

from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd

from misspec_lab.bandit.trace import BanditTrace

FLOAT_FORMAT = "%.12g"


def write_table(rows: list[dict[str, Any]] | pd.DataFrame, path: Path, columns: list[str] | None = None) -> Path:
    """Write rows as CSV with a fixed float format so reruns are byte-identical."""
    df = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(rows, columns=columns)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, float_format=FLOAT_FORMAT)
    return path


def trace_frame(trace: BanditTrace) -> pd.DataFrame:
    """round, action_index, reward, instant_regret, cum_regret, episode."""
    return pd.DataFrame(
        {
            "round": np.arange(1, trace.n + 1),
            "action_index": trace.actions,
            "reward": trace.rewards,
            "instant_regret": trace.instant_regret,
            "cum_regret": trace.cumulative_regret,
            "episode": trace.episode_of_rounds(),
        }
    )


def downsample_curve(values: np.ndarray, points: int = 200) -> tuple[np.ndarray, np.ndarray]:
    """Evenly spaced (round, value) samples of a per-round curve, last round included."""
    n = values.size
    if n == 0:
        return np.empty(0, dtype=np.int64), np.empty(0)
    idx = np.unique(np.linspace(0, n - 1, min(points, n)).round().astype(np.int64))
    return idx + 1, values[idx]
