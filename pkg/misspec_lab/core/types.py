from __future__ import annotations

from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

WEIGHT_SUM_TOL = 1e-12
RANK_TOL = 1e-10


class ArrayModel(BaseModel):
    """Base for records that carry numpy arrays."""

    model_config = ConfigDict(arbitrary_types_allowed=True)


def _as_float_array(value: Any, ndim: int) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-dimensional array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("array contains non-finite entries")
    return arr


class FeatureMatrix(ArrayModel):
    """
    A k×d matrix whose rows are action features.

    Rows are pairwise distinct and span R^d, so k ≥ d ≥ 1.
    """

    entries: np.ndarray

    @field_validator("entries", mode="before")
    @classmethod
    def _coerce(cls, v: Any) -> np.ndarray:
        return _as_float_array(v, 2)

    @model_validator(mode="after")
    def _check(self) -> FeatureMatrix:
        k, d = self.entries.shape
        if d < 1 or k < d:
            raise ValueError(f"feature matrix needs k >= d >= 1, got k={k}, d={d}")
        if np.unique(self.entries, axis=0).shape[0] != k:
            raise ValueError("feature matrix rows must be pairwise distinct")
        sv = np.linalg.svd(self.entries, compute_uv=False)
        if sv[-1] <= RANK_TOL * max(sv[0], 1.0):
            raise ValueError(f"feature rows do not span R^{d} (rank < d)")
        return self

    @classmethod
    def unchecked(cls, entries: np.ndarray) -> FeatureMatrix:
        """Wrap an array already known to satisfy the invariants."""
        return cls.model_construct(entries=np.asarray(entries, dtype=float))

    @property
    def k(self) -> int:
        return int(self.entries.shape[0])

    @property
    def d(self) -> int:
        return int(self.entries.shape[1])

    def scaled(self, c: float) -> FeatureMatrix:
        return FeatureMatrix.unchecked(self.entries * c)

    def subset(self, rows: np.ndarray | list[int]) -> FeatureMatrix:
        return FeatureMatrix(entries=self.entries[np.asarray(rows, dtype=int)])


class Design(BaseModel):
    """A sparse probability distribution over the rows of a feature matrix."""

    weights: dict[int, float]

    @field_validator("weights")
    @classmethod
    def _check_weights(cls, w: dict[int, float]) -> dict[int, float]:
        if not w:
            raise ValueError("a design needs at least one supported row")
        if any(i < 0 for i in w):
            raise ValueError("row indices must be non-negative")
        if any(v < 0 or not np.isfinite(v) for v in w.values()):
            raise ValueError("design weights must be finite and non-negative")
        total = float(sum(w.values()))
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"design weights sum to {total!r}, not 1")
        return {int(i): float(v) for i, v in sorted(w.items()) if v > 0}

    @property
    def support(self) -> tuple[int, ...]:
        return tuple(sorted(self.weights))

    @property
    def support_size(self) -> int:
        return len(self.weights)

    def vector(self, k: int) -> np.ndarray:
        """Dense weight vector of length *k*."""
        out = np.zeros(k)
        for i, v in self.weights.items():
            out[i] = v
        return out

    def permuted(self, perm: np.ndarray) -> Design:
        """Design on permuted rows: new row ``j`` is old row ``perm[j]``."""
        inverse = np.argsort(perm)
        return Design(weights={int(inverse[i]): v for i, v in self.weights.items()})

    @classmethod
    def uniform(cls, rows: list[int] | tuple[int, ...] | np.ndarray) -> Design:
        rows = [int(r) for r in rows]
        return cls(weights={r: 1.0 / len(rows) for r in rows})

    @classmethod
    def from_vector(cls, w: np.ndarray, prune: float = 0.0) -> Design:
        """Build from dense weights, dropping entries ≤ *prune* and renormalising."""
        w = np.where(np.asarray(w, dtype=float) > prune, w, 0.0)
        idx = np.flatnonzero(w)
        vals = w[idx] / w[idx].sum()
        return cls(weights={int(i): float(v) for i, v in zip(idx, vals)})


class DesignCertificate(ArrayModel):
    """Quality record of a computed design."""

    g_value: float
    gram: np.ndarray
    support_size: int
    iterations: int
    log_det: float
    target_g: float | None = None
    g_history: list[float] = []
    log_det_history: list[float] = []


class KWReport(BaseModel):
    """Outcome of the Kiefer–Wolfowitz optimality check."""

    is_optimal: bool
    g_value: float
    d: int
    tol: float
    argmax_row: int
    max_leverage: float


class MisspecifiedReward(ArrayModel):
    """
    A reward vector mu = Φθ + Δ with ‖Δ‖∞ ≤ ε.

    ``mu`` is computed once at construction and checked against the parts.
    """

    theta: np.ndarray
    delta: np.ndarray
    epsilon: float
    mu: np.ndarray

    @field_validator("theta", "delta", "mu", mode="before")
    @classmethod
    def _coerce(cls, v: Any) -> np.ndarray:
        return _as_float_array(v, 1)

    @model_validator(mode="after")
    def _check(self) -> MisspecifiedReward:
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.delta.shape != self.mu.shape:
            raise ValueError("delta and mu must have the same length")
        if np.max(np.abs(self.delta), initial=0.0) > self.epsilon:
            raise ValueError(
                f"‖Δ‖∞ = {np.max(np.abs(self.delta))!r} exceeds epsilon = {self.epsilon!r}"
            )
        return self

    @classmethod
    def from_features(
        cls,
        phi: FeatureMatrix,
        theta: np.ndarray,
        delta: np.ndarray,
        epsilon: float,
    ) -> MisspecifiedReward:
        theta = np.asarray(theta, dtype=float)
        delta = np.asarray(delta, dtype=float)
        if theta.shape != (phi.d,) or delta.shape != (phi.k,):
            raise ValueError(
                f"theta must have length {phi.d} and delta length {phi.k}"
            )
        return cls(theta=theta, delta=delta, epsilon=epsilon, mu=phi.entries @ theta + delta)

    @classmethod
    def worst_case(
        cls,
        phi: FeatureMatrix,
        theta: np.ndarray,
        epsilon: float,
        signs: np.ndarray,
    ) -> MisspecifiedReward:
        """Misspecification on the boundary: Δ_i = ε·sign_i with |Δ_i| = ε exactly."""
        signs = np.where(np.asarray(signs) >= 0, 1.0, -1.0)
        return cls.from_features(phi, theta, epsilon * signs, epsilon)

    def residual(self, phi: FeatureMatrix) -> float:
        """max |mu − (Φθ + Δ)|, zero up to rounding for a consistent record."""
        return float(np.max(np.abs(self.mu - phi.entries @ self.theta - self.delta)))

    @property
    def optimal_value(self) -> float:
        return float(self.mu.max())


class HardInstance(ArrayModel):
    """Unit-norm rows with pairwise |aᵀb| ≤ ε."""

    phi: FeatureMatrix
    epsilon: float
    k: int
    d: int
    max_inner: float


class LearnerOutput(ArrayModel):
    """What a query-game learner returns."""

    mu_hat: np.ndarray
    a_hat: int
    queries_used: int
    queried: tuple[int, ...] = ()

    @model_validator(mode="after")
    def _check(self) -> LearnerOutput:
        if not 0 <= self.a_hat < len(self.mu_hat):
            raise ValueError(f"a_hat={self.a_hat} is not an action index")
        return self
