"""
Near-orthogonal hard instances.

Rows are drawn one at a time uniformly on the unit sphere and rejected when
they violate |aᵀb| ≤ ε against an accepted row. All logarithms are natural.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from misspec_lab.core.errors import (
    CertificationError,
    HardnessOverflowError,
    JLConstructionError,
    PreconditionError,
)
from misspec_lab.core.rng import SeedLike, make_rng
from misspec_lab.core.types import FeatureMatrix, HardInstance, MisspecifiedReward

logger = logging.getLogger(__name__)

MAX_RETRIES = 10_000
DEFAULT_HARDNESS_CAP = 10**12
# Largest scaled instance we are willing to materialise.
MAX_MATERIALISED_ROWS = 20_000


def jl_dimension(k: int, epsilon: float) -> int:
    """d = ⌈8·ln(k)/ε²⌉."""
    return math.ceil(8.0 * math.log(k) / epsilon**2)


def max_pairwise_inner(X: np.ndarray, block: int = 1024) -> float:
    """max over distinct rows of |aᵀb|, computed block-wise."""
    k = X.shape[0]
    best = 0.0
    for start in range(0, k, block):
        stop = min(start + block, k)
        P = np.abs(X[start:stop] @ X.T)
        P[np.arange(stop - start), np.arange(start, stop)] = 0.0
        best = max(best, float(P.max(initial=0.0)))
    return best


def _sample_near_orthogonal(
    k: int,
    d: int,
    bound: float,
    rng: np.random.Generator,
    max_retries: int = MAX_RETRIES,
) -> np.ndarray:
    X = np.empty((k, d))
    worst = 0.0
    for i in range(k):
        for _ in range(max_retries):
            v = rng.standard_normal(d)
            v /= np.linalg.norm(v)
            if i == 0 or bound >= 1.0:
                break
            inner = float(np.max(np.abs(X[:i] @ v)))
            if inner <= bound:
                break
            worst = max(worst, inner)
        else:
            raise JLConstructionError(
                f"row {i} rejected {max_retries} times (best max |aᵀb| seen {worst:.4f} > {bound})",
                achieved_max_inner=worst,
                rows_accepted=i,
            )
        X[i] = v
    return X


def _certify(X: np.ndarray, bound: float) -> float:
    norms = np.linalg.norm(X, axis=1)
    if np.max(np.abs(norms - 1.0)) > 1e-10:
        raise CertificationError("hard-instance rows are not unit norm", {"norms": norms.tolist()})
    inner = max_pairwise_inner(X)
    if inner > bound:
        raise CertificationError(
            f"max |aᵀb| = {inner} exceeds the bound {bound}", {"max_inner": inner}
        )
    return inner


def jl_feature_matrix(
    k: int,
    epsilon: float,
    seed: SeedLike = None,
    d: int | None = None,
    max_retries: int = MAX_RETRIES,
) -> HardInstance:
    """
    k unit rows in dimension d = ⌈8 ln k/ε²⌉ with pairwise |aᵀb| ≤ ε.

    A larger explicit *d* is accepted. The result usually has k < d, so its
    feature matrix only spans a k-dimensional subspace.
    """
    if not 0.0 < epsilon < 1.0:
        raise PreconditionError(f"epsilon must lie in (0, 1), got {epsilon}")
    if k < 2:
        raise PreconditionError(f"k must be at least 2, got {k}")
    d_min = jl_dimension(k, epsilon)
    if d is None:
        d = d_min
    elif d < d_min:
        raise PreconditionError(f"d={d} is below the required dimension {d_min}")
    X = _sample_near_orthogonal(k, d, epsilon, make_rng(seed), max_retries)
    inner = _certify(X, epsilon)
    logger.debug("jl instance: k=%d d=%d max|aᵀb|=%.4f", k, d, inner)
    return HardInstance(phi=FeatureMatrix.unchecked(X), epsilon=epsilon, k=k, d=d, max_inner=inner)


def near_orthogonal_rows(
    k: int, d: int, bound: float, seed: SeedLike = None, max_retries: int = MAX_RETRIES
) -> HardInstance:
    """Unit rows with |aᵀb| ≤ bound for any bound > 0 (bound ≥ 1 accepts every draw)."""
    if bound <= 0.0:
        raise PreconditionError(f"bound must be positive, got {bound}")
    X = _sample_near_orthogonal(k, d, bound, make_rng(seed), max_retries)
    inner = _certify(X, bound)
    return HardInstance(phi=FeatureMatrix.unchecked(X), epsilon=bound, k=k, d=d, max_inner=inner)


def embed_unit_vectors(inst: HardInstance) -> list[MisspecifiedReward]:
    """
    One reward per row: θ = a_i, μ = e_i, Δ = e_i − Φa_i.

    Every embedding is certified to satisfy ‖Δ‖∞ ≤ inst.epsilon.
    """
    X = inst.phi.entries
    P = X @ X.T
    out: list[MisspecifiedReward] = []
    for i in range(inst.k):
        e = np.zeros(inst.k)
        e[i] = 1.0
        delta = e - P[:, i]
        err = float(np.max(np.abs(delta)))
        if err > inst.epsilon + 1e-12:
            raise CertificationError(
                f"embedding {i} has ‖Δ‖∞ = {err} > ε = {inst.epsilon}", {"row": i, "err": err}
            )
        # The ±1e-12 slack covers rounding on the unit diagonal.
        delta = np.clip(delta, -inst.epsilon, inst.epsilon)
        out.append(MisspecifiedReward(theta=X[i].copy(), delta=delta, epsilon=inst.epsilon, mu=e))
    return out


def hardness_count(
    d: int, epsilon: float, delta: float, cap: int = DEFAULT_HARDNESS_CAP
) -> int:
    """k = ⌊exp(((d−1)/8)·(ε/δ)²)⌋, the action count of the scaled hard instance."""
    if d < 2:
        raise PreconditionError(f"d must be at least 2, got {d}")
    if not 0.0 < epsilon <= delta:
        raise PreconditionError(f"need 0 < epsilon <= delta, got epsilon={epsilon}, delta={delta}")
    exponent = (d - 1) / 8.0 * (epsilon / delta) ** 2
    if exponent > math.log(cap):
        raise HardnessOverflowError(
            f"exp({exponent:.3g}) exceeds the action-count cap {cap}"
        )
    return int(math.floor(math.exp(exponent)))


def scaled_hard_instance(
    d: int,
    epsilon: float,
    delta: float,
    seed: SeedLike = None,
    max_rows: int = MAX_MATERIALISED_ROWS,
) -> tuple[HardInstance, list[MisspecifiedReward]]:
    """
    The δ-scaled construction: k = hardness_count(d, ε, δ) unit rows with
    |aᵀb| ≤ ε/δ, and the k rewards δ·e_i with θ = δ·a_i.

    Each reward lies in the ε-misspecified class of the rows.
    """
    k = hardness_count(d, epsilon, delta)
    if k > max_rows:
        raise HardnessOverflowError(f"k={k} rows exceeds the materialisation limit {max_rows}")
    ratio = epsilon / delta
    inst = near_orthogonal_rows(k, d, ratio, seed)
    X = inst.phi.entries
    rewards: list[MisspecifiedReward] = []
    for i in range(k):
        mu = np.zeros(k)
        mu[i] = delta
        resid = mu - delta * (X @ X[i])
        resid = np.clip(resid, -epsilon, epsilon)
        rewards.append(
            MisspecifiedReward(theta=delta * X[i], delta=resid, epsilon=epsilon, mu=mu)
        )
    return inst, rewards


def random_misspecified_reward(
    phi: FeatureMatrix,
    epsilon: float,
    seed: SeedLike = None,
    worst_case: bool = False,
    theta_scale: float = 1.0,
) -> MisspecifiedReward:
    """
    θ ~ N(0, theta_scale²·I) and Δ uniform on [−ε, ε]^k, or ±ε with random
    signs when *worst_case* is set.
    """
    if epsilon < 0:
        raise PreconditionError("epsilon must be non-negative")
    rng = make_rng(seed)
    theta = theta_scale * rng.standard_normal(phi.d)
    if worst_case:
        return MisspecifiedReward.worst_case(phi, theta, epsilon, rng.choice([-1.0, 1.0], size=phi.k))
    delta = rng.uniform(-epsilon, epsilon, size=phi.k)
    return MisspecifiedReward.from_features(phi, theta, delta, epsilon)
