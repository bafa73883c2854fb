from __future__ import annotations

import math

import numpy as np
import pytest

from misspec_lab.bandit import (
    ContextSequence,
    Noise,
    NoiseKind,
    confidence_radius,
    failure_instance,
    linucb,
    linucb_modified,
    random_context_sequence,
)
from misspec_lab.core.errors import PreconditionError
from misspec_lab.core.rng import stream

FAILURE_EPS = 0.5
FAILURE_N = 100_000


def test_failure_instance_layout():
    ctx = failure_instance(FAILURE_EPS, 10)
    assert ctx.n == 10 and ctx.d == 2
    assert ctx.means(0)[0] == pytest.approx(-FAILURE_EPS / 2)
    assert ctx.means(1)[0] == pytest.approx(FAILURE_EPS / 2)
    assert np.allclose(ctx.means(5), [0.5, 0.0])
    assert np.array_equal(ctx.features(9), [[2.0, 1.0], [0.0, 0.0]])
    assert ctx.noise.kind == NoiseKind.NONE

    # Gram matrix after the first phase is diagonal with (n/4)ε² on each axis.
    n = 1_000
    ctx = failure_instance(FAILURE_EPS, n)
    G = np.eye(2)
    for t in range(n // 2):
        x = ctx.features(t)[0]
        G += np.outer(x, x)
    assert np.allclose(G, np.diag([1 + n * FAILURE_EPS**2 / 4] * 2))


def test_failure_instance_preconditions():
    with pytest.raises(PreconditionError):
        failure_instance(0.0, 10)
    with pytest.raises(PreconditionError):
        failure_instance(0.5, 11)


@pytest.fixture(scope="module")
def failure_runs():
    ctx = failure_instance(FAILURE_EPS, FAILURE_N)
    plain = linucb(ctx, seed=0)
    modified = linucb_modified(ctx, epsilon=FAILURE_EPS, seed=0)
    return plain, modified


def test_unmodified_linucb_is_stuck(failure_runs):
    plain, _ = failure_runs
    half = FAILURE_N // 2
    assert plain.cumulative_regret[half - 1] == 0.0
    assert plain.final_regret == FAILURE_N / 4
    assert np.all(plain.actions[half:] == 1)


def test_bonus_escapes_the_trap(failure_runs):
    _, modified = failure_runs
    assert modified.final_regret <= FAILURE_N / 10
    assert modified.bonus_sum <= modified.bonus_bound * (1 + 1e-9)


def test_zero_epsilon_bonus_changes_nothing():
    ctx = random_context_sequence(800, 5, 3, seed=2)
    a = linucb(ctx, seed=4)
    b = linucb_modified(ctx, epsilon=0.0, seed=4)
    assert np.array_equal(a.actions, b.actions)
    assert np.array_equal(a.rewards, b.rewards)


def test_single_action_per_round_has_no_regret():
    ctx = ContextSequence(
        pool=[np.array([[1.0]])],
        pool_deltas=[np.zeros(1)],
        schedule=np.zeros(50, dtype=np.int64),
        theta=np.array([0.3]),
    )
    trace = linucb(ctx, seed=0)
    assert trace.n == 50
    assert trace.final_regret == 0.0


def test_bonus_accounting_on_random_contexts():
    ctx = random_context_sequence(1_500, 6, 4, epsilon=0.05, seed=stream(3, 0))
    trace = linucb_modified(ctx, epsilon=0.05, seed=1)
    assert trace.bonus_sum is not None
    assert 0.0 < trace.bonus_sum <= trace.bonus_bound * (1 + 1e-9)
    plain = linucb(ctx, seed=1)
    assert plain.bonus_sum is None


def test_ties_go_to_the_lowest_index():
    ctx = ContextSequence(
        pool=[np.array([[1.0, 0.0], [1.0, 0.0]])],
        pool_deltas=[np.zeros(2)],
        schedule=np.zeros(20, dtype=np.int64),
        theta=np.array([0.5, 0.0]),
        noise=Noise(kind=NoiseKind.NONE),
    )
    assert np.all(linucb(ctx, seed=0).actions == 0)


def test_confidence_radius():
    assert confidence_radius(100, 2) == pytest.approx(
        1 + math.sqrt(2 * math.log(100) + 2 * math.log(51))
    )


def test_linucb_preconditions():
    ctx = random_context_sequence(10, 3, 2, seed=0)
    with pytest.raises(PreconditionError):
        linucb(ctx, n=11)
    with pytest.raises(PreconditionError):
        linucb_modified(ctx, epsilon=-1.0)
    with pytest.raises(PreconditionError):
        random_context_sequence(0, 3, 2)


def test_context_validation():
    with pytest.raises(ValueError):
        ContextSequence(
            pool=[np.eye(2)],
            pool_deltas=[np.array([0.5, 0.0])],
            schedule=np.zeros(3, dtype=np.int64),
            theta=np.zeros(2),
            epsilon=0.1,
        )
    with pytest.raises(ValueError):
        ContextSequence(
            pool=[np.eye(2)],
            pool_deltas=[np.zeros(2)],
            schedule=np.array([0, 1]),
            theta=np.zeros(2),
        )


@pytest.mark.slow
def test_realizable_contextual_regret_is_sublinear():
    ctx = random_context_sequence(100_000, 10, 3, seed=stream(5, 0))
    trace = linucb(ctx, seed=5)
    early = trace.cumulative_regret[9_999] / 10_000
    late = trace.final_regret / 100_000
    assert late < early
