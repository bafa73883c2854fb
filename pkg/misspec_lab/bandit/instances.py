from __future__ import annotations

import logging
import math
from enum import Enum

import numpy as np
from pydantic import BaseModel, field_validator, model_validator

from misspec_lab.core.errors import PreconditionError
from misspec_lab.core.rng import SeedLike, make_rng
from misspec_lab.core.types import ArrayModel, FeatureMatrix, MisspecifiedReward
from misspec_lab.hypothesis.jl import near_orthogonal_rows

logger = logging.getLogger(__name__)


class NoiseKind(str, Enum):
    GAUSSIAN = "gaussian"
    UNIFORM = "uniform"
    NONE = "none"


class Noise(BaseModel):
    """Additive reward noise. Uniform noise on ±√3·σ has variance σ² and is σ-subgaussian."""

    kind: NoiseKind = NoiseKind.GAUSSIAN
    scale: float = 1.0

    @field_validator("scale")
    @classmethod
    def _non_negative(cls, v: float) -> float:
        if v < 0:
            raise ValueError("noise scale must be non-negative")
        return v

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        if self.kind == NoiseKind.NONE or self.scale == 0.0:
            return np.zeros(size)
        if self.kind == NoiseKind.UNIFORM:
            half = math.sqrt(3.0) * self.scale
            return rng.uniform(-half, half, size=size)
        return self.scale * rng.standard_normal(size)


# ---------------------------------------------------------------------------
# Fixed-action instances
# ---------------------------------------------------------------------------

class BanditInstance(ArrayModel):
    """A fixed action set Φ with rewards μ = Φθ + Δ observed under noise."""

    phi: FeatureMatrix
    reward: MisspecifiedReward
    noise: Noise = Noise()

    @model_validator(mode="after")
    def _check(self) -> BanditInstance:
        if self.reward.mu.shape != (self.phi.k,) or self.reward.theta.shape != (self.phi.d,):
            raise ValueError("reward does not match the feature matrix shape")
        spread = float(self.reward.mu.max() - self.reward.mu.min())
        if spread > 1.0 + 1e-12:
            logger.warning(
                "reward range %.3g exceeds 1; regret guarantees assume μ in a unit interval", spread
            )
        return self

    @property
    def k(self) -> int:
        return self.phi.k

    @property
    def d(self) -> int:
        return self.phi.d

    @property
    def mu(self) -> np.ndarray:
        return self.reward.mu

    @property
    def epsilon(self) -> float:
        return self.reward.epsilon

    @property
    def noise_scale(self) -> float:
        return self.noise.scale

    @property
    def optimal_arm(self) -> int:
        return int(np.argmax(self.reward.mu))


def random_bandit_instance(
    k: int,
    d: int,
    epsilon: float = 0.0,
    seed: SeedLike = None,
    min_gap: float = 0.0,
    worst_case: bool = False,
    noise: Noise | None = None,
    max_tries: int = 1000,
) -> BanditInstance:
    """
    Unit-norm Gaussian rows, θ uniform on the sphere of radius 1/2 and Δ
    uniform on [−ε, ε]^k (or ±ε with *worst_case*). θ is redrawn until the
    gap between the best and second-best reward is at least *min_gap*.
    """
    if k < d:
        raise PreconditionError(f"need k >= d, got k={k}, d={d}")
    rng = make_rng(seed)
    X = rng.standard_normal((k, d))
    X /= np.linalg.norm(X, axis=1, keepdims=True)
    phi = FeatureMatrix(entries=X)
    for _ in range(max_tries):
        theta = rng.standard_normal(d)
        theta *= 0.5 / np.linalg.norm(theta)
        if worst_case:
            delta = epsilon * rng.choice([-1.0, 1.0], size=k)
        else:
            delta = rng.uniform(-epsilon, epsilon, size=k)
        reward = MisspecifiedReward.from_features(phi, theta, delta, epsilon)
        top = np.sort(reward.mu)[::-1]
        if k == 1 or top[0] - top[1] >= min_gap:
            return BanditInstance(phi=phi, reward=reward, noise=noise or Noise())
    raise PreconditionError(f"no θ with reward gap >= {min_gap} found in {max_tries} draws")


def lower_bound_instance(
    k: int,
    d: int,
    star: int,
    epsilon: float = 1.0,
    seed: SeedLike = None,
    noise: Noise | None = None,
) -> BanditInstance:
    """
    Needle instance on near-orthogonal rows: μ = εδ·e_star with
    δ = √((d−1)/(8 ln k)) and θ = εδ·a_star.

    Rows satisfy |aᵀb| ≤ √(8 ln k/(d−1)), which keeps ‖μ − Φθ‖∞ ≤ ε.
    """
    if k < max(d, 2) or d < 2:
        raise PreconditionError(f"need k >= d >= 2, got k={k}, d={d}")
    if not 0 <= star < k:
        raise PreconditionError(f"star={star} is not an action index")
    if epsilon <= 0:
        raise PreconditionError("epsilon must be positive")
    bound = math.sqrt(8.0 * math.log(k) / (d - 1))
    inst = near_orthogonal_rows(k, d, bound, seed)
    phi = FeatureMatrix(entries=inst.phi.entries)
    scale = epsilon * math.sqrt((d - 1) / (8.0 * math.log(k)))
    theta = scale * phi.entries[star]
    mu = np.zeros(k)
    mu[star] = scale
    delta = mu - phi.entries @ theta
    if np.max(np.abs(delta)) > epsilon + 1e-12:
        raise PreconditionError("near-orthogonal rows violate the misspecification bound")
    reward = MisspecifiedReward(
        theta=theta, delta=np.clip(delta, -epsilon, epsilon), epsilon=epsilon, mu=mu
    )
    return BanditInstance(phi=phi, reward=reward, noise=noise or Noise())


def regret_envelope(n: int, d: int, k: int, epsilon: float) -> float:
    """√(dn·log(nk)) + εn·√d·log(n)."""
    return math.sqrt(d * n * math.log(n * k)) + epsilon * n * math.sqrt(d) * math.log(n)


# ---------------------------------------------------------------------------
# Contextual instances
# ---------------------------------------------------------------------------

class ContextSequence(ArrayModel):
    """
    Per-round action sets drawn from a finite pool.

    Round t (0-based) presents ``pool[schedule[t]]`` with misspecification
    ``pool_deltas[schedule[t]]``; rewards are ⟨a, θ⟩ + Δ.
    """

    pool: list[np.ndarray]
    pool_deltas: list[np.ndarray]
    schedule: np.ndarray
    theta: np.ndarray
    epsilon: float = 0.0
    noise: Noise = Noise()

    @model_validator(mode="after")
    def _check(self) -> ContextSequence:
        d = self.theta.shape[0]
        if len(self.pool) != len(self.pool_deltas) or not self.pool:
            raise ValueError("pool and pool_deltas must be non-empty and of equal length")
        for X, delta in zip(self.pool, self.pool_deltas):
            if X.ndim != 2 or X.shape[1] != d or delta.shape != (X.shape[0],):
                raise ValueError("pool matrices must be k_t×d with matching delta vectors")
            if np.max(np.abs(delta)) > self.epsilon + 1e-12:
                raise ValueError("a context's misspecification exceeds epsilon")
        if self.schedule.min() < 0 or self.schedule.max() >= len(self.pool):
            raise ValueError("schedule refers to a context outside the pool")
        norms = max(float(np.linalg.norm(X, axis=1).max()) for X in self.pool)
        values = max(float(np.abs(X @ self.theta).max()) for X in self.pool)
        if norms > 1.0 + 1e-12 or values > 1.0 + 1e-12:
            logger.warning(
                "contexts break the unit-norm assumptions (max ‖a‖ = %.3g, max |⟨a,θ⟩| = %.3g)",
                norms, values,
            )
        return self

    @property
    def n(self) -> int:
        return int(self.schedule.size)

    @property
    def d(self) -> int:
        return int(self.theta.shape[0])

    def features(self, t: int) -> np.ndarray:
        return self.pool[self.schedule[t]]

    def means(self, t: int) -> np.ndarray:
        j = self.schedule[t]
        return self.pool[j] @ self.theta + self.pool_deltas[j]


def failure_instance(epsilon: float, n: int) -> ContextSequence:
    """
    Two-phase sequence that traps LinUCB without the misspecification bonus.

    The first n/2 rounds alternate the single actions (ε, 0) and (0, ε) with
    Δ = −ε and +ε; the rest offer (2, 1) and (0, 0) with no misspecification.
    θ = (1/2, −1/2) and there is no noise.
    """
    if epsilon <= 0:
        raise PreconditionError("epsilon must be positive")
    if n < 2 or n % 2:
        raise PreconditionError(f"n must be a positive even number, got {n}")
    pool = [
        np.array([[epsilon, 0.0]]),
        np.array([[0.0, epsilon]]),
        np.array([[2.0, 1.0], [0.0, 0.0]]),
    ]
    deltas = [np.array([-epsilon]), np.array([epsilon]), np.zeros(2)]
    half = n // 2
    schedule = np.concatenate([np.arange(half) % 2, np.full(n - half, 2)])
    return ContextSequence(
        pool=pool,
        pool_deltas=deltas,
        schedule=schedule,
        theta=np.array([0.5, -0.5]),
        epsilon=epsilon,
        noise=Noise(kind=NoiseKind.NONE, scale=0.0),
    )


def random_context_sequence(
    n: int,
    k_t: int,
    d: int,
    epsilon: float = 0.0,
    seed: SeedLike = None,
    pool_size: int = 32,
    noise: Noise | None = None,
) -> ContextSequence:
    """
    Contexts of k_t rows drawn uniformly from the unit ball, θ a unit vector
    and Δ uniform on [−ε, ε]; each round picks a pool entry uniformly.
    """
    if n < 1 or k_t < 1 or d < 1 or pool_size < 1:
        raise PreconditionError("n, k_t, d and pool_size must be positive")
    rng = make_rng(seed)
    theta = rng.standard_normal(d)
    theta /= np.linalg.norm(theta)
    pool, deltas = [], []
    for _ in range(pool_size):
        X = rng.standard_normal((k_t, d))
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        X *= rng.uniform(0.0, 1.0, size=(k_t, 1)) ** (1.0 / d)
        pool.append(X)
        deltas.append(rng.uniform(-epsilon, epsilon, size=k_t))
    schedule = rng.integers(0, pool_size, size=n)
    return ContextSequence(
        pool=pool,
        pool_deltas=deltas,
        schedule=schedule,
        theta=theta,
        epsilon=epsilon,
        noise=noise or Noise(),
    )
