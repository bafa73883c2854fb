from __future__ import annotations

import logging
from functools import lru_cache

import numpy as np

from misspec_lab.core.errors import EnumerationBudgetError, PreconditionError

logger = logging.getLogger(__name__)

MAX_POINTS = 12
MAX_ACTIONS = 6


def brute_force_est_complexity(h_points: np.ndarray | list, delta: float) -> int:
    """
    Minimax number of queries a deterministic sound learner needs on the
    finite class *h_points* (rows are candidate μ vectors).

    Game-tree search: an information set S (points consistent with the
    answers so far) is solved once every coordinate's range over S is below
    2δ, because the midpoint is then within δ of all of S. Otherwise the
    learner picks the query minimising the worst answer. Randomised learners
    are not searched, so the result upper-bounds the randomised value.
    """
    H = np.unique(np.atleast_2d(np.asarray(h_points, dtype=float)), axis=0)
    n, k = H.shape
    if delta <= 0:
        raise PreconditionError("delta must be positive")
    if n > MAX_POINTS or k > MAX_ACTIONS:
        raise EnumerationBudgetError(
            f"exhaustive search is limited to {MAX_POINTS} points and {MAX_ACTIONS} actions, "
            f"got {n} points over {k} actions"
        )

    def coverable(S: frozenset[int]) -> bool:
        rows = H[sorted(S)]
        return bool(np.all(rows.max(axis=0) - rows.min(axis=0) < 2 * delta))

    @lru_cache(maxsize=None)
    def value(S: frozenset[int], Q: frozenset[int]) -> int:
        if coverable(S):
            return 0
        best = k + 1
        for i in range(k):
            if i in Q:
                continue
            answers: dict[float, set[int]] = {}
            for p in S:
                answers.setdefault(float(H[p, i]), set()).add(p)
            if len(answers) == 1:
                continue
            worst = max(value(frozenset(part), Q | {i}) for part in answers.values())
            best = min(best, 1 + worst)
        return best

    result = value(frozenset(range(n)), frozenset())
    logger.debug("brute-force c_est(δ=%g) over %d points, k=%d: %d", delta, n, k, result)
    return result
