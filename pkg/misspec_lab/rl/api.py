"""
Approximate policy iteration with rollouts on an optimal-design core set.

Every rollout step is one call to the generative model, so a run uses
exactly k·m·n·|C| samples.
"""

from __future__ import annotations

import logging
import math

import numpy as np
from pydantic import BaseModel, Field

from misspec_lab.core.errors import PreconditionError
from misspec_lab.core.rng import SeedLike, make_rng
from misspec_lab.core.types import ArrayModel, FeatureMatrix
from misspec_lab.design.frank_wolfe import frank_wolfe_design
from misspec_lab.query.learners import least_squares_on_design
from misspec_lab.rl.features import chebyshev_misspecification
from misspec_lab.rl.mdp import CoreSet, Policy, QEstimate, TabularMDP
from misspec_lab.rl.solvers import exact_policy_eval, greedy_policy, optimal_policy, pair_operator

logger = logging.getLogger(__name__)


class ApiParameters(BaseModel):
    k: int = Field(ge=1)
    m: int = Field(ge=1)
    n: int = Field(ge=1)


class ApiOverrides(BaseModel):
    """Replace any of the computed iteration count, rollout count or rollout length."""

    k: int | None = Field(default=None, ge=1)
    m: int | None = Field(default=None, ge=1)
    n: int | None = Field(default=None, ge=1)


class IterationRecord(BaseModel):
    iteration: int
    core_error: float
    extrapolation_error: float
    misspecification: float
    extrapolation_bound: float
    suboptimality: float
    samples: int


class ApiDiagnostics(ArrayModel):
    parameters: ApiParameters
    core_set: CoreSet
    design_g: float
    iterations: list[IterationRecord] = []
    samples: int = 0
    value_gap: float = 0.0
    delta: float = 0.0
    value_gap_bound: float = 0.0
    convergence_bound: float = 0.0
    propagated_bound: float = 0.0
    final_suboptimality: float = 0.0
    union_events: int = 0
    failure_probability: float = 0.0
    policies: list[Policy] = []
    q_tables: list[np.ndarray] = []


def api_parameters(
    epsilon: float, d: int, gamma: float, core_size: int, alpha: float
) -> ApiParameters:
    """
    k = ⌈log(1/(ε√d))/(1−γ)⌉, m = ⌈log(2k|C|/α)/(2ε²(1−γ)²)⌉,
    n = ⌈log(1/(ε(1−γ)))/(1−γ)⌉, each at least 1.
    """
    if epsilon <= 0 or not 0 < alpha < 1 or not 0 < gamma < 1:
        raise PreconditionError("need epsilon > 0, alpha in (0, 1) and gamma in (0, 1)")
    h = 1.0 - gamma
    k = max(1, math.ceil(math.log(1.0 / (epsilon * math.sqrt(d))) / h))
    m = max(1, math.ceil(math.log(2.0 * k * core_size / alpha) / (2.0 * epsilon**2 * h**2)))
    n = max(1, math.ceil(math.log(1.0 / (epsilon * h)) / h))
    return ApiParameters(k=k, m=m, n=n)


def rollout_returns(
    mdp: TabularMDP, pi: Policy, s: int, a: int, n: int, m: int, seed: SeedLike = None
) -> np.ndarray:
    """
    m independent discounted returns Σ_{t<n} γᵗ r(s_t, a_t), starting at
    (s, a) and then following π.
    """
    if n < 1 or m < 1:
        raise PreconditionError("rollout length and count must be positive")
    rng = make_rng(seed)
    states = np.full(m, int(s))
    actions = np.full(m, int(a))
    cdf = np.cumsum(mdp.P, axis=2)
    returns = np.zeros(m)
    discount = 1.0
    for t in range(n):
        returns += discount * mdp.r[states, actions]
        discount *= mdp.gamma
        if t + 1 < n:
            u = rng.random(m)
            states = np.minimum((u[:, None] > cdf[states, actions]).sum(axis=1), mdp.S - 1)
            actions = pi.actions[states]
    return returns


def rollout_q(mdp: TabularMDP, pi: Policy, s: int, a: int, n: int, seed: SeedLike = None) -> float:
    return float(rollout_returns(mdp, pi, s, a, n, 1, seed)[0])


def api_core_set(
    mdp: TabularMDP,
    phi: FeatureMatrix,
    epsilon: float,
    alpha: float,
    seed: SeedLike = None,
    overrides: ApiOverrides | None = None,
    initial_policy: Policy | None = None,
) -> tuple[Policy, ApiDiagnostics]:
    """
    Policy iteration on the core set of a g ≤ 2d design.

    Each iteration averages m rollouts of length n from every core-set pair,
    extrapolates Q = Φθ̂ by design-weighted least squares and acts greedily.
    Diagnostics compare every iterate against exact oracles.
    """
    if phi.k != mdp.n_pairs:
        raise PreconditionError(f"features have {phi.k} rows, the MDP has {mdp.n_pairs} pairs")
    rng = make_rng(seed)
    d = phi.d
    rho, cert = frank_wolfe_design(phi, target_g=2.0 * d)
    core = CoreSet.from_design(mdp, rho)
    params = api_parameters(epsilon, d, mdp.gamma, rho.support_size, alpha)
    if overrides is not None:
        params = params.model_copy(update=overrides.model_dump(exclude_none=True))
    k, m, n = params.k, params.m, params.n

    pi_star, V_star, Q_star = optimal_policy(mdp)
    pi = (initial_policy or Policy.constant(mdp.S)).check(mdp)
    policies = [pi]
    q_tables: list[np.ndarray] = []
    records: list[IterationRecord] = []
    samples = 0
    sqrt_g = math.sqrt(cert.g_value)

    for i in range(1, k + 1):
        _, Q_pi = exact_policy_eval(mdp, pi)
        q_pi = Q_pi.ravel()
        estimates = {}
        for idx, (s, a) in zip(rho.support, core.pairs):
            estimates[idx] = float(rollout_returns(mdp, pi, s, a, n, m, rng).mean())
            samples += m * n
        theta = least_squares_on_design(phi, rho, estimates)
        q_hat = QEstimate(phi=phi, theta_hat=theta)
        values = q_hat.values()
        beta = max(abs(estimates[j] - q_pi[j]) for j in rho.support)
        eps_i = chebyshev_misspecification(phi, q_pi)
        records.append(
            IterationRecord(
                iteration=i,
                core_error=beta,
                extrapolation_error=float(np.max(np.abs(values - q_pi))),
                misspecification=eps_i,
                extrapolation_bound=eps_i + (eps_i + beta) * sqrt_g,
                suboptimality=float(np.max(np.abs(Q_star - Q_pi))),
                samples=samples,
            )
        )
        q_tables.append(values)
        pi = greedy_policy(mdp, q_hat)
        policies.append(pi)

    V_out, Q_out = exact_policy_eval(mdp, pi)
    delta = 3.0 * epsilon * math.sqrt(2.0 * d) + epsilon
    h = 1.0 - mdp.gamma
    diag = ApiDiagnostics(
        parameters=params,
        core_set=core,
        design_g=cert.g_value,
        iterations=records,
        samples=samples,
        value_gap=float(np.max(V_star - V_out)),
        delta=delta,
        value_gap_bound=2.0 / h**2 * (3.0 * delta + mdp.gamma**k),
        convergence_bound=2.0 * delta / h + mdp.gamma**k / h,
        propagated_bound=2.0 * mdp.gamma * delta / h**2 + mdp.gamma**k / h,
        final_suboptimality=float(np.max(np.abs(Q_star - Q_out))),
        union_events=k * rho.support_size,
        failure_probability=alpha,
        policies=policies,
        q_tables=q_tables,
    )
    logger.info(
        "api: k=%d m=%d n=%d |C|=%d samples=%d value gap %.4g (bound %.4g)",
        k, m, n, rho.support_size, samples, diag.value_gap, diag.value_gap_bound,
    )
    return pi, diag


class PropagationCheck(BaseModel):
    lhs_max: float
    rhs_min_slack: float
    holds: bool


def propagation_bound(
    mdp: TabularMDP, policies: list[Policy], q_tables: list[np.ndarray], tol: float = 1e-8
) -> PropagationCheck:
    """
    Pointwise error-propagation inequality for policy iteration with
    approximate Q functions, evaluated with exact operators on pairs:

        Q* − Q^{π_k} ≤ (γP^{π*})^k (Q* − Q^{π_0}) + γ Σ_i (γP^{π*})^{k−i−1} E_i δ_i

    where δ_i = Q_i − Q^{π_i}, π_{i+1} is greedy for Q_i and
    E_i = P^{π_{i+1}}(I − γP^{π_{i+1}})⁻¹(I − γP^{π_i}) − P^{π*}.
    """
    k = len(q_tables)
    if len(policies) != k + 1:
        raise PreconditionError("need one more policy than Q tables")
    g = mdp.gamma
    I = np.eye(mdp.n_pairs)
    pi_star, _, Q_star = optimal_policy(mdp)
    P_star = pair_operator(mdp, pi_star)
    q_star = Q_star.ravel()

    def q_of(pi: Policy) -> np.ndarray:
        return exact_policy_eval(mdp, pi)[1].ravel()

    rhs = np.linalg.matrix_power(g * P_star, k) @ (q_star - q_of(policies[0]))
    for i in range(k):
        P_i = pair_operator(mdp, policies[i])
        P_next = pair_operator(mdp, policies[i + 1])
        E_i = P_next @ np.linalg.solve(I - g * P_next, I - g * P_i) - P_star
        delta_i = q_tables[i] - q_of(policies[i])
        rhs += g * np.linalg.matrix_power(g * P_star, k - i - 1) @ (E_i @ delta_i)
    lhs = q_star - q_of(policies[k])
    slack = rhs - lhs
    return PropagationCheck(
        lhs_max=float(lhs.max()),
        rhs_min_slack=float(slack.min()),
        holds=bool(slack.min() >= -tol),
    )
