from __future__ import annotations

import logging
import math

import numpy as np
import scipy.linalg as sla
from pydantic import BaseModel

from misspec_lab.core.errors import DesignError, PreconditionError, RankDeficientError
from misspec_lab.core.types import Design, DesignCertificate, FeatureMatrix, KWReport

logger = logging.getLogger(__name__)

# ---------------------------------------------------------------------------
# Constants shared with the bandit and rl packages
# ---------------------------------------------------------------------------

PRUNE_TOL = 1e-10
KW_FLOOR_TOL = 1e-8


def _loglog(d: int) -> float:
    """log log d with the small-d guard (d ≤ 2 is treated as d = 3)."""
    return math.log(math.log(max(d, 3)))


def core_set_bound(d: int) -> int:
    """⌈4d·loglog d⌉ + 16, the near-optimal core-set size."""
    return math.ceil(4 * d * _loglog(d)) + 16


def default_max_support(d: int) -> int:
    return max(core_set_bound(d), d * (d + 1) // 2)


def default_max_iters(d: int) -> int:
    return max(10 * d * math.ceil(_loglog(d)), 200)


def initial_episode_length(d: int) -> int:
    """First phased-elimination episode length m₁."""
    return core_set_bound(d)


# ---------------------------------------------------------------------------
# Criterion evaluation
# ---------------------------------------------------------------------------

def _check_design(phi: FeatureMatrix, rho: Design) -> None:
    bad = [i for i in rho.support if i >= phi.k]
    if bad:
        raise PreconditionError(
            f"design supports rows {bad} but the feature matrix has only {phi.k} rows"
        )


def _gram_dense(X: np.ndarray, w: np.ndarray) -> np.ndarray:
    S = np.flatnonzero(w)
    G = (X[S].T * w[S]) @ X[S]
    return 0.5 * (G + G.T)


def spd_factor(G: np.ndarray) -> tuple[np.ndarray, bool]:
    """Cholesky factor of *G*; raises RankDeficientError when G is not positive definite."""
    try:
        c = sla.cho_factor(G, lower=True, check_finite=False)
    except np.linalg.LinAlgError:
        eig = float(np.linalg.eigvalsh(G)[0])
        raise RankDeficientError(
            "Gram matrix is singular: the design support does not span the feature space",
            min_eigenvalue=eig,
        ) from None
    diag = np.abs(np.diag(c[0]))
    if diag.min() <= 1e-12 * max(diag.max(), 1.0):
        raise RankDeficientError(
            "Gram matrix is numerically singular: the design support does not span",
            min_eigenvalue=float(diag.min() ** 2),
        )
    return c


def _leverages(X: np.ndarray, c: tuple[np.ndarray, bool]) -> np.ndarray:
    return np.einsum("ij,ji->i", X, sla.cho_solve(c, X.T, check_finite=False))


def _log_det(c: tuple[np.ndarray, bool]) -> float:
    return float(2.0 * np.sum(np.log(np.abs(np.diag(c[0])))))


def gram(phi: FeatureMatrix, rho: Design, require_spd: bool = False) -> np.ndarray:
    """
    G(ρ) = Σ_a ρ(a)·a·aᵀ over the support of *rho*.

    The result is symmetric. With *require_spd* a non-spanning support raises
    RankDeficientError instead of returning a singular matrix.
    """
    _check_design(phi, rho)
    G = _gram_dense(phi.entries, rho.vector(phi.k))
    if require_spd:
        spd_factor(G)
    return G


def leverages(phi: FeatureMatrix, rho: Design) -> np.ndarray:
    """aᵀG(ρ)⁻¹a for every row a of phi."""
    c = spd_factor(gram(phi, rho))
    return _leverages(phi.entries, c)


def g_value(phi: FeatureMatrix, rho: Design) -> float:
    """g(ρ): the largest leverage over all rows, not just the support."""
    return float(leverages(phi, rho).max())


def log_det(phi: FeatureMatrix, rho: Design) -> float:
    return _log_det(spd_factor(gram(phi, rho)))


def kw_certificate(
    phi: FeatureMatrix, rho: Design, tol: float = 1e-6
) -> tuple[bool, KWReport]:
    """
    Kiefer–Wolfowitz check: *rho* is (1+tol)-optimal iff g(ρ) ≤ d·(1+tol).

    The report names the row with the largest leverage.
    """
    lev = leverages(phi, rho)
    j = int(np.argmax(lev))
    ok = bool(lev[j] <= phi.d * (1.0 + tol))
    return ok, KWReport(
        is_optimal=ok,
        g_value=float(lev[j]),
        d=phi.d,
        tol=tol,
        argmax_row=j,
        max_leverage=float(lev[j]),
    )


def rounded_allocation(rho: Design, m: int) -> dict[int, int]:
    """
    u(a) = ⌈m·ρ(a)⌉ for each supported row.

    A 1e-9 slack absorbs rounding noise in m·ρ(a); every supported row gets at
    least one pull, so m ≤ Σ u(a) ≤ m + |supp ρ|.
    """
    if m < 1:
        raise PreconditionError(f"allocation size m must be >= 1, got {m}")
    return {a: max(1, math.ceil(m * w - 1e-9)) for a, w in rho.weights.items()}


# ---------------------------------------------------------------------------
# Frank–Wolfe
# ---------------------------------------------------------------------------

class FrankWolfeOptions(BaseModel):
    """Knobs that do not change the guarantee, only the path to it."""

    away_steps: bool = True
    prune_tol: float = PRUNE_TOL


def greedy_volume_init(phi: FeatureMatrix) -> Design:
    """
    Uniform design on d rows chosen by column-pivoted QR of Φᵀ.

    Each pivot is the row with the largest residual orthogonal to the rows
    already chosen, which greedily maximises the spanned volume.
    """
    R, piv = sla.qr(phi.entries.T, mode="r", pivoting=True, check_finite=False)
    d = phi.d
    diag = np.abs(np.diag(R[:, :d]))
    if diag.min() <= 1e-10 * max(diag.max(), 1.0):
        raise RankDeficientError("feature rows do not span R^d; no spanning initial design")
    return Design.uniform(sorted(int(i) for i in piv[:d]))


def frank_wolfe_design(
    phi: FeatureMatrix,
    target_g: float | None = None,
    max_support: int | None = None,
    max_iters: int | None = None,
    options: FrankWolfeOptions | None = None,
) -> tuple[Design, DesignCertificate]:
    """
    Compute a design with g(ρ) ≤ target_g and |supp ρ| ≤ max_support.

    Starts from the greedy-volume design and alternates exact line-search
    steps of log det G: toward the row of largest leverage, or (with away
    steps enabled) away from the support row of smallest leverage when that
    gap to d is larger. Step length λ = (ℓ/d − 1)/(ℓ − 1); away steps are
    clipped so the weight stays non-negative and the row is dropped when
    the clip binds. Weights below ``prune_tol`` are dropped and the rest
    renormalised.

    Raises DesignError, carrying the best design seen, when the target is
    not met within *max_iters*.
    """
    opts = options or FrankWolfeOptions()
    k, d = phi.k, phi.d
    target = 2.0 * d if target_g is None else float(target_g)
    max_support = default_max_support(d) if max_support is None else int(max_support)
    max_iters = default_max_iters(d) if max_iters is None else int(max_iters)
    if target < d * (1 + 1e-6):
        raise PreconditionError(f"target_g={target} must be at least d·(1+1e-6) with d={d}")
    if max_support < d:
        raise PreconditionError(f"max_support={max_support} must be at least d={d}")

    X = phi.entries
    w = greedy_volume_init(phi).vector(k)

    g_hist: list[float] = []
    ld_hist: list[float] = []
    best: tuple[float, np.ndarray] | None = None
    best_feasible: tuple[float, np.ndarray] | None = None
    iterations = 0

    while True:
        G = _gram_dense(X, w)
        c = spd_factor(G)
        lev = _leverages(X, c)
        j = int(np.argmax(lev))
        g = float(lev[j])
        support = np.flatnonzero(w)
        g_hist.append(g)
        ld_hist.append(_log_det(c))

        if best is None or g < best[0]:
            best = (g, w.copy())
        if len(support) <= max_support and (best_feasible is None or g < best_feasible[0]):
            best_feasible = (g, w.copy())

        if g <= target and len(support) <= max_support:
            break
        if iterations >= max_iters:
            g_best, w_best = best_feasible or best
            rho_best = Design.from_vector(w_best)
            raise DesignError(
                f"Frank–Wolfe stopped after {iterations} iterations with g={g_best:.6g} "
                f"(target {target:.6g}, support {rho_best.support_size}/{max_support})",
                best_design=rho_best,
                certificate=_certificate(phi, rho_best, iterations, target, g_hist, ld_hist),
            )
        iterations += 1

        toward_gap = g / d - 1.0
        i = int(support[np.argmin(lev[support])])
        away_gap = 1.0 - lev[i] / d
        if opts.away_steps and len(support) > 1 and away_gap > toward_gap:
            ell = float(lev[i])
            lam_min = -w[i] / (1.0 - w[i])
            lam = (ell / d - 1.0) / (ell - 1.0) if ell > 1.0 else lam_min
            if lam <= lam_min:
                w = (1.0 - lam_min) * w
                w[i] = 0.0
            else:
                w = (1.0 - lam) * w
                w[i] += lam
        else:
            lam = (g / d - 1.0) / (g - 1.0)
            w = (1.0 - lam) * w
            w[j] += lam

        w[w < opts.prune_tol] = 0.0
        w /= w.sum()

    rho = Design.from_vector(w)
    cert = _certificate(phi, rho, iterations, target, g_hist, ld_hist)
    logger.debug(
        "frank-wolfe: k=%d d=%d g=%.6g support=%d iterations=%d",
        k, d, cert.g_value, cert.support_size, iterations,
    )
    return rho, cert


def _certificate(
    phi: FeatureMatrix,
    rho: Design,
    iterations: int,
    target: float,
    g_hist: list[float],
    ld_hist: list[float],
) -> DesignCertificate:
    G = gram(phi, rho)
    c = spd_factor(G)
    return DesignCertificate(
        g_value=float(_leverages(phi.entries, c).max()),
        gram=G,
        support_size=rho.support_size,
        iterations=iterations,
        log_det=_log_det(c),
        target_g=target,
        g_history=g_hist,
        log_det_history=ld_hist,
    )
