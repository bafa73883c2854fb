from __future__ import annotations

import logging
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from pydantic import BaseModel, field_validator, model_validator

from misspec_lab.core.errors import PreconditionError
from misspec_lab.core.rng import SeedLike, make_rng
from misspec_lab.core.types import ArrayModel, Design, FeatureMatrix

logger = logging.getLogger(__name__)

PROB_TOL = 1e-12


class TabularMDP(ArrayModel):
    """
    Finite discounted MDP.

    ``P[s, a]`` is the next-state distribution of (s, a) and ``r[s, a]`` lies
    in [0, 1]. State-action pairs are flattened row-major: index s·A + a.
    """

    P: np.ndarray
    r: np.ndarray
    gamma: float

    @field_validator("P", "r", mode="before")
    @classmethod
    def _coerce(cls, v: Any) -> np.ndarray:
        return np.array(v, dtype=float)

    @model_validator(mode="after")
    def _check(self) -> TabularMDP:
        if self.P.ndim != 3 or self.P.shape[0] != self.P.shape[2]:
            raise ValueError(f"P must have shape (S, A, S), got {self.P.shape}")
        if self.r.shape != self.P.shape[:2]:
            raise ValueError(f"r must have shape {self.P.shape[:2]}, got {self.r.shape}")
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if np.any(self.P < 0) or np.max(np.abs(self.P.sum(axis=2) - 1.0)) > PROB_TOL:
            raise ValueError("every P(·|s,a) must be a probability distribution")
        if np.any(self.r < 0) or np.any(self.r > 1):
            raise ValueError("rewards must lie in [0, 1]")
        return self

    @property
    def S(self) -> int:
        return int(self.P.shape[0])

    @property
    def A(self) -> int:
        return int(self.P.shape[1])

    @property
    def n_pairs(self) -> int:
        return self.S * self.A

    def pair(self, index: int) -> tuple[int, int]:
        return divmod(int(index), self.A)

    def pair_index(self, s: int, a: int) -> int:
        return int(s) * self.A + int(a)


class Policy(ArrayModel):
    """Deterministic policy: one action per state."""

    actions: np.ndarray

    @field_validator("actions", mode="before")
    @classmethod
    def _coerce(cls, v: Any) -> np.ndarray:
        arr = np.asarray(v, dtype=np.int64)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("a policy needs one action per state")
        return arr

    def check(self, mdp: TabularMDP) -> Policy:
        if self.actions.size != mdp.S or self.actions.min() < 0 or self.actions.max() >= mdp.A:
            raise PreconditionError(f"policy is not a map from {mdp.S} states to {mdp.A} actions")
        return self

    @classmethod
    def constant(cls, S: int, action: int = 0) -> Policy:
        return cls(actions=np.full(S, action))

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Policy) and np.array_equal(self.actions, other.actions)

    def __hash__(self) -> int:
        return hash(self.actions.tobytes())


class QEstimate(ArrayModel):
    """Q = Φθ̂; table values are always derived from ``theta_hat``."""

    phi: FeatureMatrix
    theta_hat: np.ndarray

    def values(self) -> np.ndarray:
        return self.phi.entries @ self.theta_hat

    def value(self, mdp: TabularMDP, s: int, a: int) -> float:
        return float(self.phi.entries[mdp.pair_index(s, a)] @ self.theta_hat)

    def table(self, mdp: TabularMDP) -> np.ndarray:
        return self.values().reshape(mdp.S, mdp.A)


class CoreSet(BaseModel):
    """Support of a design over state-action features, as (s, a) pairs."""

    pairs: tuple[tuple[int, int], ...]
    rho: Design

    @property
    def size(self) -> int:
        return len(self.pairs)

    @classmethod
    def from_design(cls, mdp: TabularMDP, rho: Design) -> CoreSet:
        return cls(pairs=tuple(mdp.pair(i) for i in rho.support), rho=rho)

    @model_validator(mode="after")
    def _check(self) -> CoreSet:
        if len(self.pairs) != self.rho.support_size:
            raise ValueError("core-set pairs must match the design support")
        return self


def random_mdp(S: int, A: int, gamma: float, seed: SeedLike = None) -> TabularMDP:
    """Dirichlet(1) transitions and uniform [0, 1] rewards."""
    if S < 1 or A < 1:
        raise PreconditionError("S and A must be positive")
    rng = make_rng(seed)
    P = rng.dirichlet(np.ones(S), size=(S, A))
    P /= P.sum(axis=2, keepdims=True)
    r = rng.uniform(0.0, 1.0, size=(S, A))
    return TabularMDP(P=P, r=r, gamma=gamma)


# ---------------------------------------------------------------------------
# CSV triple
# ---------------------------------------------------------------------------

def write_mdp(mdp: TabularMDP, directory: str | Path) -> None:
    """Writes transitions.csv (s,a,s_next,prob), rewards.csv (s,a,r) and metadata.csv."""
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    s, a, s2 = np.nonzero(mdp.P)
    pd.DataFrame({"s": s, "a": a, "s_next": s2, "prob": mdp.P[s, a, s2]}).to_csv(
        out / "transitions.csv", index=False, float_format="%.17g"
    )
    ss, aa = np.indices(mdp.r.shape)
    pd.DataFrame({"s": ss.ravel(), "a": aa.ravel(), "r": mdp.r.ravel()}).to_csv(
        out / "rewards.csv", index=False, float_format="%.17g"
    )
    pd.DataFrame(
        {"key": ["S", "A", "gamma"], "value": [mdp.S, mdp.A, repr(mdp.gamma)]}
    ).to_csv(out / "metadata.csv", index=False)


def read_mdp(directory: str | Path) -> TabularMDP:
    src = Path(directory)
    meta = pd.read_csv(src / "metadata.csv", dtype=str).set_index("key")["value"]
    try:
        S, A, gamma = int(meta["S"]), int(meta["A"]), float(meta["gamma"])
    except KeyError as exc:
        raise PreconditionError(f"{src / 'metadata.csv'} lacks key {exc}") from None
    trans = pd.read_csv(src / "transitions.csv")
    rew = pd.read_csv(src / "rewards.csv")
    P = np.zeros((S, A, S))
    P[trans["s"].to_numpy(), trans["a"].to_numpy(), trans["s_next"].to_numpy()] = trans["prob"].to_numpy()
    r = np.zeros((S, A))
    r[rew["s"].to_numpy(), rew["a"].to_numpy()] = rew["r"].to_numpy()
    return TabularMDP(P=P, r=r, gamma=gamma)
