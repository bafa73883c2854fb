from __future__ import annotations

import itertools
import logging
import math

import numpy as np
from pydantic import BaseModel
from scipy.optimize import linprog

from misspec_lab.core.errors import EnumerationBudgetError, PreconditionError
from misspec_lab.core.types import RANK_TOL, FeatureMatrix
from misspec_lab.design.frank_wolfe import greedy_volume_init

logger = logging.getLogger(__name__)

ENUMERATION_BUDGET = 1_000_000


class LambdaQResult(BaseModel):
    """Amplification factor of the best q-subset found."""

    value: float
    subset: tuple[int, ...]
    exact: bool = True


def subset_amplification(X: np.ndarray, subset: tuple[int, ...] | list[int]) -> float:
    """
    max_v ‖Xv‖∞ subject to ‖X_C v‖∞ ≤ 1, for the rows C = *subset*.

    The feasible polytope is centrally symmetric, so one LP maximising
    row_j·v per row outside C is enough; rows in C contribute exactly 1.
    Returns +inf when X_C does not have full column rank.
    """
    C = np.asarray(subset, dtype=int)
    XC = X[C]
    d = X.shape[1]
    if C.size < d or np.linalg.matrix_rank(XC, tol=RANK_TOL * max(1.0, np.abs(XC).max())) < d:
        return math.inf
    others = np.setdiff1d(np.arange(X.shape[0]), C)
    if others.size == 0:
        return 1.0
    if C.size == d:
        # Square and invertible: v ranges over X_C⁻¹·[−1, 1]^d.
        coeffs = np.linalg.solve(XC.T, X[others].T).T
        return max(1.0, float(np.abs(coeffs).sum(axis=1).max()))
    A_ub = np.vstack([XC, -XC])
    b_ub = np.ones(2 * C.size)
    best = 1.0
    for j in others:
        res = linprog(-X[j], A_ub=A_ub, b_ub=b_ub, bounds=[(None, None)] * d, method="highs")
        if res.status == 3:
            return math.inf
        if res.status != 0:
            raise RuntimeError(f"amplification LP for row {j} failed: {res.message}")
        best = max(best, float(-res.fun))
    return best


def lambda_q(
    phi: FeatureMatrix,
    q: int,
    heuristic: bool = False,
    budget: int = ENUMERATION_BUDGET,
) -> LambdaQResult:
    """
    λ_q(Φ) = min over |C| = q of max_v ‖Φv‖∞ / ‖Φ_C v‖∞.

    Subsets are enumerated exhaustively in lexicographic order (first minimiser
    wins) while C(k, q) ≤ *budget*. Past the budget, *heuristic* switches to
    greedy forward selection from a volume-maximising basis and the result is
    flagged ``exact=False``.
    """
    k = phi.k
    if not 1 <= q <= k:
        raise PreconditionError(f"q must satisfy 1 <= q <= k={k}, got {q}")
    X = phi.entries
    n_subsets = math.comb(k, q)
    if n_subsets <= budget:
        best_val, best_c = math.inf, tuple(range(q))
        for C in itertools.combinations(range(k), q):
            val = subset_amplification(X, C)
            if val < best_val:
                best_val, best_c = val, C
        return LambdaQResult(value=best_val, subset=best_c, exact=True)
    if not heuristic:
        raise EnumerationBudgetError(
            f"C({k}, {q}) = {n_subsets} subsets exceeds the budget {budget}; "
            "pass heuristic=True for greedy forward selection"
        )
    return _greedy_lambda_q(phi, q)


def _greedy_lambda_q(phi: FeatureMatrix, q: int) -> LambdaQResult:
    X = phi.entries
    seed_rows = list(greedy_volume_init(phi).support)
    if q <= phi.d:
        C = tuple(sorted(seed_rows[:q]))
        return LambdaQResult(value=subset_amplification(X, C), subset=C, exact=False)
    chosen = set(seed_rows)
    value = subset_amplification(X, sorted(chosen))
    while len(chosen) < q:
        best_val, best_j = math.inf, -1
        for j in range(phi.k):
            if j in chosen:
                continue
            val = subset_amplification(X, sorted(chosen | {j}))
            if val < best_val:
                best_val, best_j = val, j
        chosen.add(best_j)
        value = best_val
    logger.info("greedy λ_%d = %.6g (approximate)", q, value)
    return LambdaQResult(value=value, subset=tuple(sorted(chosen)), exact=False)
