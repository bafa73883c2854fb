from __future__ import annotations

import numpy as np
import pytest

from misspec_lab.core.errors import DesignError, PreconditionError, RankDeficientError
from misspec_lab.core.rng import stream
from misspec_lab.core.types import Design, FeatureMatrix
from misspec_lab.design import (
    core_set_bound,
    frank_wolfe_design,
    g_value,
    gram,
    greedy_volume_init,
    kw_certificate,
    leverages,
    reduce_to_span,
    rounded_allocation,
)
from misspec_lab.design.frank_wolfe import FrankWolfeOptions, default_max_support


@pytest.mark.parametrize("d", [1, 2, 5, 20])
def test_identity_features_give_uniform_design(d):
    phi = FeatureMatrix(entries=np.eye(d))
    rho, cert = frank_wolfe_design(phi)
    assert rho.support == tuple(range(d))
    assert np.allclose(list(rho.weights.values()), 1.0 / d)
    assert cert.g_value == pytest.approx(d, abs=1e-8)


def test_random_features_reach_twice_d_with_small_support():
    d = 10
    bound = core_set_bound(d)
    assert bound == 49
    for seed in range(20):
        rng = stream(seed, 0)
        X = rng.standard_normal((500, d))
        phi = FeatureMatrix(entries=X / np.linalg.norm(X, axis=1, keepdims=True))
        rho, cert = frank_wolfe_design(phi, target_g=2 * d, max_support=bound)
        assert cert.g_value <= 2 * d
        assert rho.support_size <= bound
        assert g_value(phi, rho) == pytest.approx(cert.g_value)


def test_log_det_never_decreases(phi_small):
    _, cert = frank_wolfe_design(phi_small, target_g=phi_small.d * 1.05, max_iters=5000)
    steps = np.diff(cert.log_det_history)
    assert np.all(steps >= -1e-9)


def test_toward_steps_only_still_certify(phi_small):
    rho, cert = frank_wolfe_design(
        phi_small, options=FrankWolfeOptions(away_steps=False), max_support=phi_small.k
    )
    assert cert.g_value <= 2 * phi_small.d
    assert cert.support_size == rho.support_size


def test_leverages_average_to_d_under_the_design(phi_small):
    rho, _ = frank_wolfe_design(phi_small)
    lev = leverages(phi_small, rho)
    assert rho.vector(phi_small.k) @ lev == pytest.approx(phi_small.d)
    assert lev.max() >= phi_small.d - 1e-8


def test_kw_certificate_flags_optimal_and_suboptimal(phi_small):
    eye = FeatureMatrix(entries=np.eye(3))
    ok, report = kw_certificate(eye, Design.uniform([0, 1, 2]))
    assert ok and report.g_value == pytest.approx(3.0)

    init = greedy_volume_init(phi_small)
    ok, report = kw_certificate(phi_small, init)
    assert not ok
    assert report.max_leverage == pytest.approx(g_value(phi_small, init))
    assert 0 <= report.argmax_row < phi_small.k


def test_greedy_init_spans(phi_small):
    rho = greedy_volume_init(phi_small)
    assert rho.support_size == phi_small.d
    G = gram(phi_small, rho, require_spd=True)
    assert np.allclose(G, G.T)


def test_non_spanning_support_is_rank_deficient(phi_small):
    with pytest.raises(RankDeficientError):
        gram(phi_small, Design(weights={0: 0.5, 1: 0.5}), require_spd=True)
    with pytest.raises(RankDeficientError):
        g_value(phi_small, Design(weights={3: 1.0}))


def test_design_error_carries_best_design(phi_small):
    with pytest.raises(DesignError) as info:
        frank_wolfe_design(phi_small, target_g=phi_small.d * (1 + 1e-6), max_iters=0)
    err = info.value
    assert err.best_design is not None
    assert err.certificate.g_value >= phi_small.d - 1e-8


def test_bad_targets_are_rejected(phi_small):
    with pytest.raises(PreconditionError):
        frank_wolfe_design(phi_small, target_g=phi_small.d)
    with pytest.raises(PreconditionError):
        frank_wolfe_design(phi_small, max_support=phi_small.d - 1)


def test_design_rejects_rows_outside_matrix(phi_small):
    with pytest.raises(PreconditionError):
        gram(phi_small, Design(weights={phi_small.k: 1.0}))


def test_design_weights_must_sum_to_one():
    with pytest.raises(ValueError):
        Design(weights={0: 0.5, 1: 0.4})
    with pytest.raises(ValueError):
        Design(weights={0: 1.5, 1: -0.5})


def test_permuting_rows_permutes_the_design(phi_small, rng):
    rho, _ = frank_wolfe_design(phi_small)
    perm = rng.permutation(phi_small.k)
    permuted_phi = FeatureMatrix(entries=phi_small.entries[perm])
    assert g_value(permuted_phi, rho.permuted(perm)) == pytest.approx(g_value(phi_small, rho))


@pytest.mark.parametrize("c", [0.1, 10.0])
def test_g_is_scale_invariant(phi_small, c):
    rho, _ = frank_wolfe_design(phi_small)
    assert g_value(phi_small.scaled(c), rho) == pytest.approx(g_value(phi_small, rho), abs=1e-9)


def test_rounded_allocation_bounds(phi_small):
    rho, _ = frank_wolfe_design(phi_small)
    for m in (1, 17, 250):
        alloc = rounded_allocation(rho, m)
        assert set(alloc) == set(rho.support)
        assert m <= sum(alloc.values()) <= m + rho.support_size
    with pytest.raises(PreconditionError):
        rounded_allocation(rho, 0)


def test_default_support_cap_covers_small_d():
    assert default_max_support(1) >= 1
    assert default_max_support(10) == max(49, 55)


def test_span_reduction_recovers_rows(rng):
    basis = np.linalg.qr(rng.standard_normal((4, 2)))[0]
    X = rng.standard_normal((12, 2)) @ basis.T
    Z, B = reduce_to_span(X)
    assert Z.shape == (12, 2)
    assert np.allclose(Z @ B.T, X)
    assert np.allclose(B.T @ B, np.eye(2))


def test_feature_matrix_invariants():
    with pytest.raises(ValueError):
        FeatureMatrix(entries=np.ones((3, 2)))
    with pytest.raises(ValueError):
        FeatureMatrix(entries=np.eye(3)[:2])
