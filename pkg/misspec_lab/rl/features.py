from __future__ import annotations

import itertools
import logging
from enum import Enum

import numpy as np

from misspec_lab.core.errors import PreconditionError
from misspec_lab.core.rng import SeedLike, make_rng
from misspec_lab.core.types import ArrayModel, FeatureMatrix
from misspec_lab.query.learners import chebyshev_fit
from misspec_lab.rl.mdp import Policy, TabularMDP
from misspec_lab.rl.solvers import bellman_optimality, exact_policy_eval, greedy_policy, optimal_policy

logger = logging.getLogger(__name__)

EXHAUSTIVE_POLICY_LIMIT = 4096
SAMPLED_POLICIES = 256
GREEDY_ITERATES = 32


class FeatureMode(str, Enum):
    TABULAR = "tabular"
    PROJECTED = "projected"


class QFeatures(ArrayModel):
    """State-action features with their measured misspecification over a policy set."""

    phi: FeatureMatrix
    epsilon: float
    policies_checked: int
    lower_estimate: bool = False


def chebyshev_misspecification(phi: FeatureMatrix, q: np.ndarray) -> float:
    """min_θ ‖q − Φθ‖∞."""
    return chebyshev_fit(phi.entries, np.asarray(q, dtype=float).ravel())[1]


def policy_sample(
    mdp: TabularMDP, rng: np.random.Generator, extra: list[Policy] | None = None
) -> tuple[list[Policy], bool]:
    """
    Every deterministic policy when there are at most 4096 of them;
    otherwise 256 random ones plus the optimal policy and the greedy
    policies of successive value-iteration iterates. The flag is True when
    the set is a sample.
    """
    extra = list(extra or [])
    if mdp.A**mdp.S <= EXHAUSTIVE_POLICY_LIMIT:
        grid = itertools.product(range(mdp.A), repeat=mdp.S)
        return [Policy(actions=np.array(p)) for p in grid], False
    policies = [Policy(actions=rng.integers(0, mdp.A, size=mdp.S)) for _ in range(SAMPLED_POLICIES)]
    policies.append(optimal_policy(mdp)[0])
    Q = np.zeros((mdp.S, mdp.A))
    for _ in range(GREEDY_ITERATES):
        Q = bellman_optimality(mdp, Q)
        policies.append(greedy_policy(mdp, Q))
    policies.extend(extra)
    return list(dict.fromkeys(policies)), True


def build_q_features(
    mdp: TabularMDP,
    mode: FeatureMode | str = FeatureMode.TABULAR,
    d: int | None = None,
    seed: SeedLike = None,
    extra_policies: list[Policy] | None = None,
) -> QFeatures:
    """
    Tabular mode: identity features, ε = 0. Projected mode: d orthonormal
    random directions in ℝ^{S·A}, with ε the largest Chebyshev residual of
    Q^π over the policy set.
    """
    mode = FeatureMode(mode)
    n = mdp.n_pairs
    if mode == FeatureMode.TABULAR:
        return QFeatures(phi=FeatureMatrix(entries=np.eye(n)), epsilon=0.0, policies_checked=0)
    if d is None or not 1 <= d <= n:
        raise PreconditionError(f"projected features need 1 <= d <= S·A = {n}, got {d}")
    rng = make_rng(seed)
    basis, _ = np.linalg.qr(rng.standard_normal((n, d)))
    phi = FeatureMatrix(entries=basis)
    policies, sampled = policy_sample(mdp, rng, extra_policies)
    if d == n:
        return QFeatures(phi=phi, epsilon=0.0, policies_checked=len(policies), lower_estimate=False)
    eps = 0.0
    for pi in policies:
        _, Q = exact_policy_eval(mdp, pi)
        eps = max(eps, chebyshev_misspecification(phi, Q))
    logger.debug("projected features: d=%d, ε=%.4g over %d policies", d, eps, len(policies))
    return QFeatures(phi=phi, epsilon=eps, policies_checked=len(policies), lower_estimate=sampled)
