from __future__ import annotations

import itertools
import math

import numpy as np
import pytest

from misspec_lab.core.errors import PreconditionError
from misspec_lab.core.rng import stream
from misspec_lab.core.types import FeatureMatrix
from misspec_lab.rl import (
    ApiOverrides,
    FeatureMode,
    Policy,
    TabularMDP,
    api_core_set,
    api_parameters,
    build_q_features,
    chebyshev_misspecification,
    exact_policy_eval,
    exact_value_iteration,
    greedy_policy,
    optimal_policy,
    propagation_bound,
    random_mdp,
    read_mdp,
    rollout_q,
    rollout_returns,
    write_mdp,
)
from misspec_lab.rl.features import policy_sample


def deterministic_mdp(S: int, A: int, gamma: float, seed: int) -> TabularMDP:
    rng = stream(seed, 0)
    P = np.zeros((S, A, S))
    nxt = rng.integers(0, S, size=(S, A))
    P[np.arange(S)[:, None], np.arange(A)[None, :], nxt] = 1.0
    return TabularMDP(P=P, r=rng.uniform(0.0, 1.0, size=(S, A)), gamma=gamma)


def test_single_state_value():
    mdp = TabularMDP(P=[[[1.0]]], r=[[1.0]], gamma=0.9)
    V, Q = exact_value_iteration(mdp)
    assert V[0] == pytest.approx(10.0, abs=1e-9)
    pi, V_pi, _ = optimal_policy(mdp)
    assert pi.actions.tolist() == [0]
    assert V_pi[0] == pytest.approx(10.0)


def test_policy_eval_satisfies_bellman(rng):
    mdp = random_mdp(6, 3, 0.8, seed=rng)
    pi = Policy(actions=rng.integers(0, 3, size=6))
    V, Q = exact_policy_eval(mdp, pi)
    states = np.arange(6)
    P_pi = mdp.P[states, pi.actions]
    assert np.allclose(V, mdp.r[states, pi.actions] + 0.8 * P_pi @ V)
    assert np.allclose(Q[states, pi.actions], V)


def test_value_iteration_matches_best_policy(rng):
    mdp = random_mdp(3, 2, 0.7, seed=rng)
    V_star, _ = exact_value_iteration(mdp, tol=1e-12)
    best = max(
        (exact_policy_eval(mdp, Policy(actions=[a, b, c]))[0] for a in range(2) for b in range(2) for c in range(2)),
        key=lambda v: v.sum(),
    )
    assert np.allclose(V_star, best, atol=1e-9)


def test_greedy_ties_go_to_action_zero():
    mdp = random_mdp(4, 3, 0.5, seed=0)
    assert greedy_policy(mdp, np.zeros((4, 3))).actions.tolist() == [0, 0, 0, 0]


def test_greedy_policy_ignores_perturbations_below_half_the_gap(rng):
    for _ in range(20):
        mdp = random_mdp(5, 3, 0.8, seed=rng)
        pi_star, _, Q_star = optimal_policy(mdp)
        top2 = np.sort(Q_star, axis=1)[:, -2:]
        half_gap = 0.5 * float(np.min(top2[:, 1] - top2[:, 0]))
        noise = rng.uniform(-1.0, 1.0, size=Q_star.shape) * 0.99 * half_gap
        assert greedy_policy(mdp, Q_star + noise) == pi_star
        assert greedy_policy(mdp, Q_star) == pi_star


def test_rollout_on_single_state():
    gamma, n = 0.9, 7
    mdp = TabularMDP(P=[[[1.0]]], r=[[0.5]], gamma=gamma)
    expected = 0.5 * (1 - gamma**n) / (1 - gamma)
    assert rollout_q(mdp, Policy.constant(1), 0, 0, n, seed=0) == pytest.approx(expected)
    returns = rollout_returns(mdp, Policy.constant(1), 0, 0, n, 4, seed=0)
    assert np.allclose(returns, expected)
    with pytest.raises(PreconditionError):
        rollout_returns(mdp, Policy.constant(1), 0, 0, 0, 1)


def test_rollouts_are_unbiased_for_long_horizons(rng):
    mdp = random_mdp(3, 2, 0.5, seed=rng)
    pi = Policy(actions=[1, 0, 1])
    _, Q = exact_policy_eval(mdp, pi)
    returns = rollout_returns(mdp, pi, 2, 1, 60, 20_000, seed=rng)
    assert returns.mean() == pytest.approx(Q[2, 1], abs=0.05)


def test_api_parameters_formulas():
    eps, d, gamma, core, alpha = 0.1, 4, 0.9, 10, 0.05
    p = api_parameters(eps, d, gamma, core, alpha)
    h = 1 - gamma
    assert p.k == math.ceil(math.log(1 / (eps * 2)) / h)
    assert p.m == math.ceil(math.log(2 * p.k * core / alpha) / (2 * eps**2 * h**2))
    assert p.n == math.ceil(math.log(1 / (eps * h)) / h)
    assert api_parameters(0.9, 4, 0.5, 3, 0.1).k == 1
    with pytest.raises(PreconditionError):
        api_parameters(0.0, 4, 0.9, 3, 0.1)


def test_sample_ledger(rng):
    mdp = random_mdp(4, 2, 0.6, seed=rng)
    feats = build_q_features(mdp, FeatureMode.PROJECTED, d=3, seed=rng)
    _, diag = api_core_set(
        mdp, feats.phi, 0.1, 0.05, seed=rng, overrides=ApiOverrides(k=3, m=2, n=5)
    )
    assert (diag.parameters.k, diag.parameters.m, diag.parameters.n) == (3, 2, 5)
    assert diag.samples == 3 * 2 * 5 * diag.core_set.size
    assert [r.samples for r in diag.iterations] == [2 * 5 * diag.core_set.size * i for i in (1, 2, 3)]
    assert diag.union_events == 3 * diag.core_set.size
    assert len(diag.policies) == len(diag.q_tables) + 1


def test_tabular_api_finds_optimal_policy_on_deterministic_mdp():
    mdp = deterministic_mdp(4, 2, 0.5, seed=3)
    feats = build_q_features(mdp, FeatureMode.TABULAR)
    assert feats.epsilon == 0.0 and feats.phi.d == mdp.n_pairs
    pi, diag = api_core_set(
        mdp, feats.phi, 0.05, 0.05, seed=0, overrides=ApiOverrides(k=20, m=1, n=80)
    )
    pi_star, V_star, _ = optimal_policy(mdp)
    assert diag.core_set.size == mdp.n_pairs
    assert diag.value_gap <= 1e-9
    assert np.allclose(exact_policy_eval(mdp, pi)[0], V_star, atol=1e-9)
    for record in diag.iterations:
        assert record.core_error <= 1e-12
        assert record.extrapolation_error <= 1e-9


def test_api_extrapolation_within_bound(rng):
    mdp = random_mdp(5, 2, 0.7, seed=rng)
    feats = build_q_features(mdp, FeatureMode.PROJECTED, d=6, seed=rng)
    _, diag = api_core_set(
        mdp, feats.phi, max(feats.epsilon, 0.05), 0.05, seed=rng,
        overrides=ApiOverrides(k=4, m=50, n=30),
    )
    for record in diag.iterations:
        assert record.misspecification <= feats.epsilon + 1e-7
        assert record.extrapolation_error <= record.extrapolation_bound + 1e-7
    assert diag.value_gap <= diag.value_gap_bound


def test_api_propagation_inequality_holds(rng):
    mdp = random_mdp(4, 3, 0.8, seed=rng)
    feats = build_q_features(mdp, FeatureMode.PROJECTED, d=5, seed=rng)
    _, diag = api_core_set(
        mdp, feats.phi, 0.1, 0.05, seed=rng, overrides=ApiOverrides(k=5, m=20, n=25)
    )
    check = propagation_bound(mdp, diag.policies, diag.q_tables)
    assert check.holds
    with pytest.raises(PreconditionError):
        propagation_bound(mdp, diag.policies, diag.q_tables[:-1])


def test_api_rejects_mismatched_features(rng):
    mdp = random_mdp(3, 2, 0.5, seed=rng)
    with pytest.raises(PreconditionError):
        api_core_set(mdp, FeatureMatrix(entries=np.eye(5)), 0.1, 0.05)


def test_projected_features():
    mdp = random_mdp(3, 2, 0.6, seed=1)
    full = build_q_features(mdp, "projected", d=6, seed=2)
    assert full.epsilon == 0.0
    assert full.policies_checked == 2**3
    low = build_q_features(mdp, "projected", d=2, seed=2)
    assert low.epsilon > 0.0
    assert not low.lower_estimate
    assert np.allclose(low.phi.entries.T @ low.phi.entries, np.eye(2))
    with pytest.raises(PreconditionError):
        build_q_features(mdp, "projected", d=7)


def test_projected_epsilon_is_the_worst_policy_fit():
    mdp = random_mdp(3, 2, 0.7, seed=4)
    feats = build_q_features(mdp, FeatureMode.PROJECTED, d=3, seed=5)
    assert feats.policies_checked == 2**3
    fits = [
        chebyshev_misspecification(feats.phi, exact_policy_eval(mdp, Policy(actions=p))[1])
        for p in itertools.product(range(2), repeat=3)
    ]
    assert feats.epsilon == pytest.approx(max(fits), abs=1e-9)
    assert min(fits) <= feats.epsilon


def test_sampled_policy_set_contains_the_optimal_policy(rng):
    mdp = random_mdp(7, 4, 0.9, seed=rng)
    policies, sampled = policy_sample(mdp, rng)
    assert sampled
    assert optimal_policy(mdp)[0] in policies
    assert len(policies) == len(set(policies))


def test_mdp_csv_round_trip(tmp_path, rng):
    mdp = random_mdp(4, 3, 0.95, seed=rng)
    write_mdp(mdp, tmp_path / "mdp")
    back = read_mdp(tmp_path / "mdp")
    assert back.gamma == mdp.gamma
    assert np.array_equal(back.P, mdp.P)
    assert np.array_equal(back.r, mdp.r)


def test_mdp_validation():
    with pytest.raises(ValueError):
        TabularMDP(P=[[[1.0]]], r=[[0.5]], gamma=1.0)
    with pytest.raises(ValueError):
        TabularMDP(P=[[[0.5, 0.4], [0.5, 0.5]]] * 2, r=[[0.1, 0.2]] * 2, gamma=0.5)
    with pytest.raises(ValueError):
        TabularMDP(P=[[[1.0]]], r=[[1.5]], gamma=0.5)
    mdp = random_mdp(2, 2, 0.5, seed=0)
    with pytest.raises(PreconditionError):
        exact_policy_eval(mdp, Policy(actions=[0, 2]))


@pytest.mark.slow
def test_api_value_gap_bound_on_random_mdps():
    within = 0
    for seed in range(10):
        rng = stream(seed, 20)
        mdp = random_mdp(20, 4, 0.9, seed=rng)
        feats = build_q_features(mdp, FeatureMode.PROJECTED, d=12, seed=rng)
        assert feats.lower_estimate
        _, diag = api_core_set(
            mdp, feats.phi, feats.epsilon, 0.1, seed=rng, overrides=ApiOverrides(k=6, m=20, n=40)
        )
        assert diag.samples == 6 * 20 * 40 * diag.core_set.size
        for record in diag.iterations:
            assert record.extrapolation_error <= record.extrapolation_bound + 1e-7
        within += diag.value_gap <= diag.value_gap_bound
    assert within >= 9
