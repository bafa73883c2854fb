from __future__ import annotations

from typing import Any

import numpy as np
from pydantic import field_validator, model_validator

from misspec_lab.core.types import ArrayModel


class EpisodeRecord(ArrayModel):
    """What happened in one phased-elimination episode."""

    index: int
    start_round: int
    m: int
    pulls: int
    truncated: bool
    active: tuple[int, ...]
    reduced_dim: int
    support: tuple[int, ...] = ()
    allocation: dict[int, int] = {}
    design_g: float | None = None
    design_fallback: bool = False
    theta_hat: np.ndarray | None = None
    threshold: float | None = None
    bias: float | None = None
    bias_bound: float | None = None
    survivors: tuple[int, ...] = ()
    best_active_eliminated: bool = False
    near_optimal_retained: bool = True


class BanditTrace(ArrayModel):
    """
    One simulated run: round-by-round actions, rewards and regret.

    ``episode_boundaries`` lists the first round of each episode and
    ``eliminated_log`` the number of surviving actions after each episode.
    """

    algo: str
    actions: np.ndarray
    rewards: np.ndarray
    instant_regret: np.ndarray
    cumulative_regret: np.ndarray
    episode_boundaries: list[int] = [0]
    eliminated_log: list[int] = []
    episodes: list[EpisodeRecord] = []
    bonus_sum: float | None = None
    bonus_bound: float | None = None

    @field_validator("actions", mode="before")
    @classmethod
    def _int_actions(cls, v: Any) -> np.ndarray:
        return np.asarray(v, dtype=np.int64)

    @model_validator(mode="after")
    def _check(self) -> BanditTrace:
        n = self.actions.size
        if not (self.rewards.size == self.instant_regret.size == self.cumulative_regret.size == n):
            raise ValueError("trace arrays must all have one entry per round")
        if n and np.any(np.diff(self.cumulative_regret) < 0):
            raise ValueError("cumulative regret must be non-decreasing")
        return self

    @classmethod
    def from_rounds(
        cls,
        algo: str,
        actions: np.ndarray,
        rewards: np.ndarray,
        instant_regret: np.ndarray,
        **extra: Any,
    ) -> BanditTrace:
        return cls(
            algo=algo,
            actions=actions,
            rewards=np.asarray(rewards, dtype=float),
            instant_regret=np.asarray(instant_regret, dtype=float),
            cumulative_regret=np.cumsum(instant_regret, dtype=float),
            **extra,
        )

    @property
    def n(self) -> int:
        return int(self.actions.size)

    @property
    def final_regret(self) -> float:
        return float(self.cumulative_regret[-1]) if self.n else 0.0

    def episode_of_rounds(self) -> np.ndarray:
        """Episode index of every round (0 for algorithms without episodes)."""
        starts = np.asarray(self.episode_boundaries, dtype=np.int64)
        return np.searchsorted(starts, np.arange(self.n), side="right") - 1
