from __future__ import annotations

import logging

import numpy as np
import scipy.linalg as sla
from scipy.optimize import linprog

from misspec_lab.core.errors import PreconditionError
from misspec_lab.core.rng import SeedLike, make_rng
from misspec_lab.core.types import Design, FeatureMatrix, LearnerOutput
from misspec_lab.design.frank_wolfe import gram, spd_factor
from misspec_lab.hypothesis.amplification import lambda_q
from misspec_lab.query.environment import QueryEnvironment

logger = logging.getLogger(__name__)

LP_SLACK = 1e-7


def least_squares_on_design(
    phi: FeatureMatrix, rho: Design, values: dict[int, float]
) -> np.ndarray:
    """θ̂ = G(ρ)⁻¹ Σ_a ρ(a)·y_a·a over the support of *rho*."""
    c = spd_factor(gram(phi, rho))
    rhs = np.zeros(phi.d)
    for a, w in rho.weights.items():
        rhs += w * values[a] * phi.entries[a]
    return sla.cho_solve(c, rhs, check_finite=False)


def design_learner(
    phi: FeatureMatrix,
    rho: Design,
    env: QueryEnvironment,
    eta: np.ndarray | None = None,
) -> LearnerOutput:
    """
    Probe the support of *rho*, fit θ̂ by weighted least squares and
    extrapolate μ̂ = Φθ̂.

    *eta* (length k) perturbs the answers additively; with |η| ≤ β the error
    is at most ε + (ε + β)·√g(ρ).
    """
    if env.k != phi.k:
        raise PreconditionError(f"environment has {env.k} actions, features have {phi.k}")
    values = {a: env.probe(a) for a in rho.support}
    if eta is not None:
        eta = np.asarray(eta, dtype=float)
        values = {a: y + float(eta[a]) for a, y in values.items()}
    theta = least_squares_on_design(phi, rho, values)
    mu_hat = phi.entries @ theta
    return LearnerOutput(
        mu_hat=mu_hat,
        a_hat=int(np.argmax(mu_hat)),
        queries_used=env.query_count,
        queried=rho.support,
    )


def chebyshev_fit(X: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, float]:
    """
    θ minimising ‖Xθ − y‖∞, as the LP min t s.t. −t ≤ Xθ − y ≤ t.

    Returns ``(θ, t*)``.
    """
    n, d = X.shape
    ones = np.ones((n, 1))
    A_ub = np.block([[X, -ones], [-X, -ones]])
    b_ub = np.concatenate([y, -y])
    c = np.zeros(d + 1)
    c[-1] = 1.0
    bounds = [(None, None)] * d + [(0, None)]
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status != 0:
        raise RuntimeError(f"Chebyshev LP failed: {res.message}")
    return res.x[:d], float(res.x[-1])


def probe_and_fit(
    phi: FeatureMatrix,
    q: int,
    epsilon: float,
    env: QueryEnvironment,
    subset: tuple[int, ...] | None = None,
    heuristic: bool = False,
) -> LearnerOutput:
    """
    Probe the λ_q-minimising subset C and take μ̂ = Φθ̂ for a Chebyshev fit
    θ̂ of μ_C. For μ in the ε-misspecified class the fit residual is at most
    ε, and ‖μ̂ − μ‖∞ ≤ ε(1 + 2λ_q).
    """
    if subset is None:
        subset = lambda_q(phi, q, heuristic=heuristic).subset
    elif len(subset) != q:
        raise PreconditionError(f"subset has {len(subset)} rows, expected q={q}")
    C = np.asarray(subset, dtype=int)
    y = np.array([env.probe(i) for i in C])
    theta, t = chebyshev_fit(phi.entries[C], y)
    if t > epsilon + LP_SLACK:
        raise PreconditionError(
            f"best Chebyshev fit on the probed rows has residual {t:.6g} > ε = {epsilon}; "
            "μ is not in the ε-misspecified class"
        )
    mu_hat = phi.entries @ theta
    return LearnerOutput(
        mu_hat=mu_hat,
        a_hat=int(np.argmax(mu_hat)),
        queries_used=env.query_count,
        queried=tuple(int(i) for i in C),
    )


def random_probe_learner(k: int, env: QueryEnvironment, seed: SeedLike = None) -> LearnerOutput:
    """Probe coordinates in a random order until one answers non-zero."""
    if env.k != k:
        raise PreconditionError(f"environment has {env.k} actions, expected {k}")
    order = make_rng(seed).permutation(k)
    for i in order:
        value = env.probe(int(i))
        if value != 0.0:
            mu_hat = np.zeros(k)
            mu_hat[i] = value
            return LearnerOutput(
                mu_hat=mu_hat,
                a_hat=int(i),
                queries_used=env.query_count,
                queried=tuple(int(j) for j in order[: env.query_count]),
            )
    raise PreconditionError(f"all {k} coordinates are zero; μ is not a needle vector")


def learner_is_sound(out: LearnerOutput, mu: np.ndarray, delta: float) -> bool:
    """‖μ̂ − μ‖∞ < δ."""
    return bool(np.max(np.abs(out.mu_hat - mu)) < delta)


def learner_is_max_sound(out: LearnerOutput, mu: np.ndarray, delta: float) -> bool:
    """μ_â > max μ − δ."""
    return bool(mu[out.a_hat] > np.max(mu) - delta)
