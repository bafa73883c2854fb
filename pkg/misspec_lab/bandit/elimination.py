from __future__ import annotations

import logging
import math

import numpy as np
import scipy.linalg as sla
from pydantic import BaseModel, field_validator

from misspec_lab.bandit.instances import BanditInstance
from misspec_lab.bandit.trace import BanditTrace, EpisodeRecord
from misspec_lab.core.errors import DesignError, PreconditionError
from misspec_lab.core.rng import SeedLike, make_rng
from misspec_lab.core.types import FeatureMatrix
from misspec_lab.design.frank_wolfe import (
    frank_wolfe_design,
    initial_episode_length,
    rounded_allocation,
    spd_factor,
)
from misspec_lab.design.span import reduce_to_span

logger = logging.getLogger(__name__)


class EliminationConfig(BaseModel):
    """
    Knobs of phased elimination.

    ``alpha`` defaults to 1/(kn). With ``known_epsilon`` set the threshold
    gains the additive 4ε√d term. ``restart_on_reduction`` restarts the
    episode schedule at m₁ whenever the active set's span drops; by default
    the schedule keeps doubling.
    """

    alpha: float | None = None
    initial_m: int | None = None
    growth: float = 2.0
    width_scale: float = 2.0
    known_epsilon: float | None = None
    target_g_factor: float = 2.0
    restart_on_reduction: bool = False

    @field_validator("alpha")
    @classmethod
    def _alpha_range(cls, v: float | None) -> float | None:
        if v is not None and not 0.0 < v < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {v}")
        return v

    @field_validator("growth")
    @classmethod
    def _growth(cls, v: float) -> float:
        if v <= 1.0:
            raise ValueError("episode growth factor must exceed 1")
        return v


def elimination_threshold(
    d: int, m: int, alpha: float, width_scale: float = 2.0, epsilon: float | None = None
) -> float:
    """
    width_scale·√((4d/m)·log(1/α)), plus 4ε√d when ε is known.

    With ε known the rule max_b ⟨θ̂, b − a⟩/4 ≤ √((d/m)log(1/α)) + ε√d is the
    same inequality scaled by 4.
    """
    width = width_scale * math.sqrt(4.0 * d / m * math.log(1.0 / alpha))
    if epsilon is not None:
        width += 4.0 * epsilon * math.sqrt(d)
    return width


def phased_elimination(
    inst: BanditInstance,
    n: int,
    alpha: float | None = None,
    seed: SeedLike = None,
    config: EliminationConfig | None = None,
) -> BanditTrace:
    """
    Run phased elimination for exactly *n* rounds.

    Each episode computes a design with g ≤ 2r on the active set (r the
    dimension of its span), pulls every supported action ⌈mρ(a)⌉ times, fits
    θ̂ by least squares and keeps the actions whose estimated gap is within
    the threshold. The last episode is cut at round n; a cut episode does no
    elimination.
    """
    cfg = config or EliminationConfig()
    if n < 1:
        raise PreconditionError(f"n must be at least 1, got {n}")
    if alpha is None:
        alpha = cfg.alpha if cfg.alpha is not None else 1.0 / (inst.k * n)
    if not 0.0 < alpha < 1.0:
        raise PreconditionError(f"alpha must lie in (0, 1), got {alpha}")

    rng = make_rng(seed)
    X = inst.phi.entries
    mu = inst.mu
    mu_star = float(mu.max())
    eps_true = inst.epsilon
    retain_margin = 2.0 * eps_true * (1.0 + 2.0 * math.sqrt(inst.d))
    m1 = cfg.initial_m or initial_episode_length(inst.d)
    algo = "phased_elimination" if cfg.known_epsilon is None else "phased_elimination_known_eps"

    active = np.arange(inst.k)
    m = m1
    r_prev = inst.d
    t = 0
    actions: list[np.ndarray] = []
    rewards: list[np.ndarray] = []
    boundaries: list[int] = []
    sizes: list[int] = []
    episodes: list[EpisodeRecord] = []

    while t < n:
        boundaries.append(t)
        if active.size == 1:
            pulls = np.full(n - t, active[0])
            actions.append(pulls)
            rewards.append(mu[pulls] + inst.noise.sample(rng, pulls.size))
            episodes.append(
                EpisodeRecord(
                    index=len(episodes), start_round=t, m=n - t, pulls=pulls.size,
                    truncated=False, active=(int(active[0]),), reduced_dim=1,
                    support=(int(active[0]),), allocation={int(active[0]): int(pulls.size)},
                    survivors=(int(active[0]),),
                )
            )
            sizes.append(1)
            t = n
            break

        Z, _ = reduce_to_span(X[active])
        r = Z.shape[1]
        if r < r_prev:
            logger.debug("active set spans %d dimensions, designing in the reduced space", r)
            if cfg.restart_on_reduction:
                m = m1
        r_prev = r
        fallback = False
        try:
            rho, cert = frank_wolfe_design(
                FeatureMatrix.unchecked(Z), target_g=cfg.target_g_factor * r
            )
            design_g = cert.g_value
        except DesignError as exc:
            logger.warning("design did not reach target on %d actions: %s", active.size, exc)
            rho = exc.best_design
            design_g = exc.certificate.g_value if exc.certificate else None
            fallback = True

        alloc = rounded_allocation(rho, m)
        local = np.fromiter(alloc.keys(), dtype=np.int64)
        counts = np.fromiter(alloc.values(), dtype=np.int64)
        pulls_local = np.repeat(local, counts)
        truncated = t + pulls_local.size > n
        if truncated:
            pulls_local = pulls_local[: n - t]
        pulls = active[pulls_local]
        y = mu[pulls] + inst.noise.sample(rng, pulls.size)
        actions.append(pulls)
        rewards.append(y)

        record = dict(
            index=len(episodes), start_round=t, m=m, pulls=int(pulls.size), truncated=truncated,
            active=tuple(int(a) for a in active), reduced_dim=r,
            support=tuple(int(active[i]) for i in rho.support),
            allocation={int(active[i]): int(c) for i, c in alloc.items()},
            design_g=design_g, design_fallback=fallback,
        )
        t += pulls.size

        if truncated:
            episodes.append(EpisodeRecord(**record, survivors=tuple(int(a) for a in active)))
            sizes.append(int(active.size))
            break

        # Least squares over the pulls of this episode.
        V = (Z[local].T * counts) @ Z[local]
        c = spd_factor(0.5 * (V + V.T))
        sums = np.bincount(pulls_local, weights=y, minlength=active.size)
        theta = sla.cho_solve(c, Z.T @ sums, check_finite=False)
        est = Z @ theta
        gaps = est.max() - est
        threshold = elimination_threshold(r, m, alpha, cfg.width_scale, cfg.known_epsilon)
        keep = gaps <= threshold

        # Deterministic misspecification bias of the estimate at every active b.
        delta = inst.reward.delta[active[local]]
        bias_vec = sla.cho_solve(c, Z[local].T @ (counts * delta), check_finite=False)
        bias = float(np.max(np.abs(Z @ bias_vec)))

        survivors = active[keep]
        best_active = int(active[np.argmax(mu[active])])
        record.update(
            theta_hat=theta,
            threshold=threshold,
            bias=bias,
            bias_bound=2.0 * eps_true * math.sqrt(inst.d),
            survivors=tuple(int(a) for a in survivors),
            best_active_eliminated=best_active not in set(survivors.tolist()),
            near_optimal_retained=bool(mu[survivors].max() > mu_star - retain_margin - 1e-12),
        )
        episodes.append(EpisodeRecord(**record))
        active = survivors
        sizes.append(int(active.size))
        m = math.ceil(cfg.growth * m)

    all_actions = np.concatenate(actions)
    trace = BanditTrace.from_rounds(
        algo,
        all_actions,
        np.concatenate(rewards),
        mu_star - mu[all_actions],
        episode_boundaries=boundaries,
        eliminated_log=sizes,
        episodes=episodes,
    )
    logger.debug("%s: n=%d episodes=%d regret=%.4g", algo, n, len(episodes), trace.final_regret)
    return trace


def phased_elimination_known_eps(
    inst: BanditInstance,
    n: int,
    alpha: float | None = None,
    epsilon: float = 0.0,
    seed: SeedLike = None,
    config: EliminationConfig | None = None,
) -> BanditTrace:
    """Phased elimination whose threshold accounts for a known misspecification level."""
    if epsilon < 0:
        raise PreconditionError("epsilon must be non-negative")
    if epsilon < inst.epsilon:
        logger.warning(
            "known epsilon %.4g is below the instance's misspecification %.4g", epsilon, inst.epsilon
        )
    cfg = (config or EliminationConfig()).model_copy(update={"known_epsilon": epsilon})
    return phased_elimination(inst, n, alpha=alpha, seed=seed, config=cfg)
