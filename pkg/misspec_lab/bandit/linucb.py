from __future__ import annotations

import logging
import math

import numpy as np

from misspec_lab.bandit.instances import ContextSequence, Noise
from misspec_lab.bandit.trace import BanditTrace
from misspec_lab.core.errors import PreconditionError
from misspec_lab.core.rng import SeedLike, make_rng

logger = logging.getLogger(__name__)


def confidence_radius(n: int, d: int) -> float:
    """β = 1 + √(2 log n + d log(1 + n/d))."""
    return 1.0 + math.sqrt(2.0 * math.log(n) + d * math.log(1.0 + n / d))


class _History:
    """Past actions grouped by distinct feature vector, with multiplicities."""

    def __init__(self, d: int):
        self._index: dict[bytes, int] = {}
        self.vectors = np.empty((0, d))
        self.counts = np.empty(0)

    def add(self, x: np.ndarray) -> None:
        key = x.tobytes()
        j = self._index.get(key)
        if j is None:
            self._index[key] = len(self._index)
            self.vectors = np.vstack([self.vectors, x])
            self.counts = np.append(self.counts, 1.0)
        else:
            self.counts[j] += 1.0

    def abs_inner_sums(self, M: np.ndarray) -> np.ndarray:
        """Σ_s |m_iᵀ x_s| for every row m_i of *M*."""
        if not self.counts.size:
            return np.zeros(M.shape[0])
        return np.abs(M @ self.vectors.T) @ self.counts


def _run(
    contexts: ContextSequence,
    n: int,
    epsilon: float,
    noise: Noise | None,
    seed: SeedLike,
    algo: str,
    track_bonus: bool,
) -> BanditTrace:
    if n < 1 or n > contexts.n:
        raise PreconditionError(f"n must lie in [1, {contexts.n}], got {n}")
    if epsilon < 0:
        raise PreconditionError("epsilon must be non-negative")
    rng = make_rng(seed)
    noise = noise or contexts.noise
    eta = noise.sample(rng, n)
    d = contexts.d
    beta = confidence_radius(n, d)

    G = np.eye(d)
    b = np.zeros(d)
    history = _History(d)
    use_history = epsilon > 0 or track_bonus
    bonus_sum = 0.0
    width_sq_sum = 0.0

    actions = np.empty(n, dtype=np.int64)
    rewards = np.empty(n)
    regret = np.empty(n)
    for t in range(n):
        X = contexts.features(t)
        means = contexts.means(t)
        G_inv = np.linalg.inv(G)
        theta = G_inv @ b
        M = X @ G_inv
        width = np.sqrt(np.maximum(np.einsum("ij,ij->i", M, X), 0.0))
        index = X @ theta + beta * width
        if use_history:
            spread = history.abs_inner_sums(M)
            if epsilon > 0:
                index = index + epsilon * spread
        a = int(np.argmax(index))
        x = X[a]
        if track_bonus:
            bonus_sum += float(spread[a])
            width_sq_sum += float(width[a]) ** 2
        y = float(means[a]) + float(eta[t])
        actions[t] = a
        rewards[t] = y
        regret[t] = float(means.max() - means[a])
        G += np.outer(x, x)
        b += y * x
        if use_history:
            history.add(x)

    extra = {}
    if track_bonus:
        extra = {"bonus_sum": bonus_sum, "bonus_bound": n * math.sqrt(width_sq_sum)}
    trace = BanditTrace.from_rounds(algo, actions, rewards, regret, **extra)
    logger.debug("%s: n=%d regret=%.4g", algo, n, trace.final_regret)
    return trace


def linucb(
    contexts: ContextSequence,
    n: int | None = None,
    noise: Noise | None = None,
    seed: SeedLike = None,
    track_bonus: bool = False,
) -> BanditTrace:
    """
    LinUCB with G_t = I + Σ X_s X_sᵀ, choosing argmax ⟨a, θ̂⟩ + β‖a‖_{G⁻¹}.

    Ties go to the lowest action index. ``actions`` in the trace are row
    indices within each round's context.
    """
    n = contexts.n if n is None else n
    return _run(contexts, n, 0.0, noise, seed, "linucb", track_bonus)


def linucb_modified(
    contexts: ContextSequence,
    n: int | None = None,
    epsilon: float = 0.0,
    noise: Noise | None = None,
    seed: SeedLike = None,
    track_bonus: bool = True,
) -> BanditTrace:
    """LinUCB whose index also adds ε·Σ_s |aᵀG⁻¹X_s| over past actions X_s."""
    n = contexts.n if n is None else n
    return _run(contexts, n, epsilon, noise, seed, "linucb_modified", track_bonus)
