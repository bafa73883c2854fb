from __future__ import annotations

import logging

import numpy as np

from misspec_lab.core.errors import PreconditionError
from misspec_lab.rl.mdp import Policy, QEstimate, TabularMDP

logger = logging.getLogger(__name__)


def policy_matrices(mdp: TabularMDP, pi: Policy) -> tuple[np.ndarray, np.ndarray]:
    """State-level P^π (S×S) and r^π (S)."""
    pi.check(mdp)
    states = np.arange(mdp.S)
    return mdp.P[states, pi.actions], mdp.r[states, pi.actions]


def pair_operator(mdp: TabularMDP, pi: Policy) -> np.ndarray:
    """(P^π Q)(s, a) = Σ_s' P(s'|s,a)·Q(s', π(s')) as an (S·A)×(S·A) matrix."""
    pi.check(mdp)
    n = mdp.n_pairs
    M = np.zeros((n, mdp.S, mdp.A))
    M[:, np.arange(mdp.S), pi.actions] = mdp.P.reshape(n, mdp.S)
    return M.reshape(n, n)


def bellman_optimality(mdp: TabularMDP, Q: np.ndarray) -> np.ndarray:
    """(TQ)(s, a) = r(s, a) + γ·Σ_s' P(s'|s,a)·max_a' Q(s', a')."""
    return mdp.r + mdp.gamma * mdp.P @ Q.max(axis=1)


def exact_value_iteration(
    mdp: TabularMDP, tol: float = 1e-10, max_iters: int = 1_000_000
) -> tuple[np.ndarray, np.ndarray]:
    """
    Q-value iteration until ‖Q − TQ‖∞ ≤ tol·(1−γ)/(2γ), which puts Q within
    tol of Q*. Returns ``(V, Q)`` with V = max_a Q.
    """
    if tol <= 0:
        raise PreconditionError("tol must be positive")
    stop = tol * (1.0 - mdp.gamma) / (2.0 * mdp.gamma)
    Q = np.zeros((mdp.S, mdp.A))
    for it in range(max_iters):
        TQ = bellman_optimality(mdp, Q)
        residual = float(np.max(np.abs(TQ - Q)))
        if residual <= stop:
            break
        Q = TQ
    else:
        logger.warning("value iteration hit %d iterations (residual %.3g)", max_iters, residual)
    logger.debug("value iteration: %d sweeps, residual %.3g", it, residual)
    return Q.max(axis=1), Q


def exact_policy_eval(mdp: TabularMDP, pi: Policy) -> tuple[np.ndarray, np.ndarray]:
    """V^π from the linear system (I − γP^π)V = r^π; Q^π = r + γ·P·V^π."""
    P_pi, r_pi = policy_matrices(mdp, pi)
    V = np.linalg.solve(np.eye(mdp.S) - mdp.gamma * P_pi, r_pi)
    return V, mdp.r + mdp.gamma * mdp.P @ V


def greedy_policy(mdp: TabularMDP, q: QEstimate | np.ndarray) -> Policy:
    """π(s) = argmax_a Q(s, a), lowest action index on ties."""
    if isinstance(q, QEstimate):
        table = q.table(mdp)
    else:
        table = np.asarray(q, dtype=float).reshape(mdp.S, mdp.A)
    return Policy(actions=np.argmax(table, axis=1))


def optimal_policy(mdp: TabularMDP, tol: float = 1e-10) -> tuple[Policy, np.ndarray, np.ndarray]:
    """Greedy policy of Q* with its exact value: ``(π*, V*, Q*)``."""
    _, Q = exact_value_iteration(mdp, tol)
    pi = greedy_policy(mdp, Q)
    V, Qpi = exact_policy_eval(mdp, pi)
    return pi, V, Qpi
