from __future__ import annotations

import math

import numpy as np
import pytest

from misspec_lab.core.errors import EnumerationBudgetError, PreconditionError
from misspec_lab.core.rng import stream
from misspec_lab.core.types import FeatureMatrix, MisspecifiedReward
from misspec_lab.design import frank_wolfe_design, reduce_to_span
from misspec_lab.hypothesis import embed_unit_vectors, jl_feature_matrix, lambda_q, random_misspecified_reward
from misspec_lab.query import (
    QueryEnvironment,
    brute_force_est_complexity,
    chebyshev_fit,
    design_learner,
    learner_is_max_sound,
    learner_is_sound,
    probe_and_fit,
    random_probe_learner,
)


def test_environment_counts_distinct_probes():
    env = QueryEnvironment(np.array([0.0, 1.0, 2.0]))
    assert env.probe(2) == 2.0
    env.probe(2)
    env.probe(0)
    assert env.query_count == 2
    assert env.queried == frozenset({0, 2})
    assert len(env.query_log) == 3
    with pytest.raises(PreconditionError):
        env.probe(3)


def test_environment_budget():
    env = QueryEnvironment(np.zeros(4), max_queries=1)
    env.probe(1)
    env.probe(1)
    with pytest.raises(PreconditionError):
        env.probe(2)


def test_design_learner_is_exact_when_realizable(phi_small, rng):
    theta = rng.standard_normal(phi_small.d)
    mu = phi_small.entries @ theta
    rho, _ = frank_wolfe_design(phi_small)
    env = QueryEnvironment(mu)
    out = design_learner(phi_small, rho, env)
    assert np.max(np.abs(out.mu_hat - mu)) <= 1e-9
    assert out.a_hat == int(np.argmax(mu))
    assert env.queried == frozenset(rho.support)
    assert out.queries_used == rho.support_size


def test_design_learner_bound_on_worst_case_rewards(make_phi):
    eps = 0.1
    for seed in range(25):
        rng = stream(seed, 0)
        phi = make_phi(rng, 120, 6)
        rho, cert = frank_wolfe_design(phi)
        reward = random_misspecified_reward(phi, eps, rng, worst_case=True)
        out = design_learner(phi, rho, QueryEnvironment(reward.mu))
        bound = eps * (1.0 + math.sqrt(cert.g_value))
        assert np.max(np.abs(out.mu_hat - reward.mu)) <= bound + 1e-9
        assert learner_is_sound(out, reward.mu, eps * (1 + math.sqrt(2 * phi.d)) + 1e-9)
        assert learner_is_max_sound(out, reward.mu, 2 * eps * (1 + math.sqrt(2 * phi.d)))


def test_design_learner_on_hard_instance_embeddings():
    inst = jl_feature_matrix(20, 0.5, seed=4)
    Z, _ = reduce_to_span(inst.phi.entries)
    phi = FeatureMatrix(entries=Z)
    rho, _ = frank_wolfe_design(phi)
    bound = 0.5 * (1 + math.sqrt(2 * phi.d))
    for reward in embed_unit_vectors(inst):
        out = design_learner(phi, rho, QueryEnvironment(reward.mu))
        assert np.max(np.abs(out.mu_hat - reward.mu)) <= bound


def test_design_learner_with_perturbed_answers(phi_small, rng):
    eps, beta = 0.05, 0.2
    rho, cert = frank_wolfe_design(phi_small)
    reward = random_misspecified_reward(phi_small, eps, rng)
    eta = rng.uniform(-beta, beta, size=phi_small.k)
    out = design_learner(phi_small, rho, QueryEnvironment(reward.mu), eta=eta)
    bound = eps + (eps + beta) * math.sqrt(cert.g_value)
    assert np.max(np.abs(out.mu_hat - reward.mu)) <= bound + 1e-9


def test_design_learner_rejects_mismatched_environment(phi_small):
    rho, _ = frank_wolfe_design(phi_small)
    with pytest.raises(PreconditionError):
        design_learner(phi_small, rho, QueryEnvironment(np.zeros(3)))


def test_chebyshev_fit_on_two_points():
    theta, t = chebyshev_fit(np.array([[1.0], [1.0]]), np.array([0.0, 2.0]))
    assert theta[0] == pytest.approx(1.0, abs=1e-7)
    assert t == pytest.approx(1.0, abs=1e-7)


def test_probe_and_fit_identity():
    eps = 0.2
    phi = FeatureMatrix(entries=np.eye(3))
    reward = MisspecifiedReward.worst_case(phi, np.array([0.5, -1.0, 2.0]), eps, np.array([1, -1, 1]))
    out = probe_and_fit(phi, 3, eps, QueryEnvironment(reward.mu))
    assert np.max(np.abs(out.mu_hat - reward.mu)) <= 3 * eps + 1e-7


def test_probe_and_fit_respects_amplification_bound(make_phi):
    eps = 0.1
    for seed in range(20):
        rng = stream(seed, 1)
        phi = make_phi(rng, 8, 2)
        reward = random_misspecified_reward(phi, eps, rng, worst_case=True)
        for q in (2, 3):
            lam = lambda_q(phi, q)
            out = probe_and_fit(phi, q, eps, QueryEnvironment(reward.mu), subset=lam.subset)
            assert out.queries_used == q
            assert np.max(np.abs(out.mu_hat - reward.mu)) <= eps * (1 + 2 * lam.value) + 1e-7


def test_probe_and_fit_detects_rewards_outside_the_class():
    phi = FeatureMatrix(entries=np.array([[1.0], [2.0], [3.0]]))
    with pytest.raises(PreconditionError):
        probe_and_fit(phi, 2, 0.1, QueryEnvironment(np.array([1.0, 0.0, 0.0])), subset=(0, 1))


def test_random_probe_learner_single_action():
    out = random_probe_learner(1, QueryEnvironment(np.array([1.0])), seed=0)
    assert out.queries_used == 1 and out.a_hat == 0


def test_random_probe_learner_recovers_needle(rng):
    mu = np.zeros(7)
    mu[4] = 1.0
    out = random_probe_learner(7, QueryEnvironment(mu), rng)
    assert out.a_hat == 4
    assert np.array_equal(out.mu_hat, mu)
    assert out.queried[-1] == 4


def test_random_probe_learner_all_zero_errors():
    with pytest.raises(PreconditionError):
        random_probe_learner(4, QueryEnvironment(np.zeros(4)), seed=0)


def _mean_needle_queries(k: int, trials: int, seed: int) -> float:
    rng = stream(seed, 0)
    total = 0
    for star in rng.integers(0, k, size=trials):
        mu = np.zeros(k)
        mu[star] = 1.0
        total += random_probe_learner(k, QueryEnvironment(mu), rng).queries_used
    return total / trials


def test_needle_mean_queries_small_sample():
    assert _mean_needle_queries(5, 20_000, seed=3) == pytest.approx(3.0, abs=0.05)


@pytest.mark.slow
@pytest.mark.parametrize("k", [5, 11])
def test_needle_mean_queries_acceptance(k):
    expected = (k + 1) / 2
    assert _mean_needle_queries(k, 100_000, seed=k) == pytest.approx(expected, rel=0.02)


def test_brute_force_values():
    eye = np.eye(3)
    assert brute_force_est_complexity(eye, 0.5) == 2
    assert brute_force_est_complexity(eye, 1.01) == 0
    assert brute_force_est_complexity(np.eye(5), 0.5) == 4


def test_brute_force_is_capped_by_the_design_learner(make_phi):
    eps = 0.1
    for seed in range(5):
        rng = stream(seed, 16)
        phi = make_phi(rng, 6, 2)
        rho, cert = frank_wolfe_design(phi)
        thetas = rng.uniform(-0.5, 0.5, size=(12, 2))
        H = thetas @ phi.entries.T + eps * rng.choice([-1.0, 1.0], size=(12, 6))
        delta = eps * (1.0 + math.sqrt(cert.g_value)) + 1e-9
        for mu in H:
            out = design_learner(phi, rho, QueryEnvironment(mu))
            assert np.max(np.abs(out.mu_hat - mu)) < delta
        assert brute_force_est_complexity(H, delta) <= rho.support_size
        values = [brute_force_est_complexity(H, t * delta) for t in (0.125, 0.5, 1.0, 2.0)]
        assert values == sorted(values, reverse=True)
        assert values[0] >= 1


def test_brute_force_budget():
    with pytest.raises(EnumerationBudgetError):
        brute_force_est_complexity(np.eye(7), 0.5)
    with pytest.raises(PreconditionError):
        brute_force_est_complexity(np.eye(3), 0.0)
