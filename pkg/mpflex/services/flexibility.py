# mpflex/services/flexibility.py
"""Region policies from complementary slackness and per-user flexibility requirements."""
import logging

import numpy as np

from mpflex.core.config import settings
from mpflex.core.exceptions import MpflexError, PolicyRecoveryError
from mpflex.models.flexibility import FlexibilityInterval, FlexibilityReport, RegionPolicy, UserFlexibility
from mpflex.models.market import MarketInstance
from mpflex.models.mplp import MpLp
from mpflex.models.programs import LinearProgram
from mpflex.models.pwa import CriticalRegion, Piece, PwaValueFunction
from mpflex.services.concurrency import map_concurrently
from mpflex.services.mplp import evaluate_lp_at
from mpflex.services.solver import solve_lp

logger = logging.getLogger(__name__)

_CONSISTENCY_TOL = 1e-6
_OPTIMALITY_CUT_TOL = 1e-7


def recover_policy(region: CriticalRegion, piece: Piece, mplp: MpLp) -> RegionPolicy:
    """Rows with a strictly negative dual are tight on the region: A' x = t' + B' theta."""
    active = np.flatnonzero(piece.gamma < -settings.ACTIVE_DUAL_TOL)
    A1, t1, B1 = mplp.A[active], mplp.t[active], mplp.B[active]
    center = region.center
    common = dict(
        region=region.index,
        polyhedron=region.polyhedron,
        piece_intercept=piece.intercept,
        piece_gradient=piece.gradient,
        active_rows=active.tolist(),
    )

    if active.size and np.linalg.matrix_rank(A1) == mplp.n_vars:
        inverse = np.linalg.pinv(A1)
        x0, X = inverse @ t1, inverse @ B1
        x_center = x0 + X @ center
        residual = np.max(np.abs(A1 @ x_center - t1 - B1 @ center))
        if residual > _CONSISTENCY_TOL * (1.0 + np.max(np.abs(t1))):
            raise PolicyRecoveryError(
                f"active rows of region {region.index} are inconsistent (residual {residual:.3e})."
            )
        if np.any(mplp.A @ x_center > mplp.rhs(center) + _CONSISTENCY_TOL):
            logger.warning("policy of region %d is infeasible at its centre", region.index)
        policy = RegionPolicy(**common, explicit=True, x_intercept=x0, x_gradient=X)
        if mplp.has_market:
            D = mplp.adjustment_map
            policy = policy.model_copy(update={
                "adjustment_intercept": D @ x0 + mplp.adjustment_offset,
                "adjustment_gradient": D @ X,
            })
        return policy

    feasible = solve_lp(LinearProgram(
        c=np.zeros(mplp.n_vars), A_eq=A1, b_eq=t1 + B1 @ center, A_ub=mplp.A, b_ub=mplp.rhs(center),
    ))
    if not feasible.optimal:
        raise PolicyRecoveryError(f"active rows of region {region.index} admit no feasible point.")
    logger.debug("region %d has a non-unique optimizer; keeping the implicit system", region.index)
    return RegionPolicy(**common, explicit=False)


def evaluate_policy(policy: RegionPolicy, mplp: MpLp, theta) -> np.ndarray:
    """Adjustments of every user at ``theta`` according to the region policy."""
    if policy.explicit:
        return policy.adjustments(theta)
    evaluation = evaluate_lp_at(mplp, theta)
    if not evaluation.optimal:
        raise MpflexError(f"LP is {evaluation.status.value} at the requested parameter.")
    return mplp.adjustments(evaluation.x)


def _extreme_explicit(policy: RegionPolicy, user: int, sense: float) -> tuple[float, np.ndarray]:
    gradient = policy.adjustment_gradient[user]
    poly = policy.polyhedron
    result = solve_lp(LinearProgram(c=sense * gradient, A_ub=poly.H, b_ub=poly.h))
    if not result.optimal:
        raise MpflexError(f"region {policy.region} LP is {result.status.value}.")
    theta = result.x
    return float(policy.adjustment_intercept[user] + gradient @ theta), theta


def _extreme_implicit(policy: RegionPolicy, mplp: MpLp, user: int, sense: float) -> tuple[float, np.ndarray]:
    """Extreme adjustment over (x, theta) restricted to optimal solutions on the region.

    Optimality is enforced by c'x + offset <= m + n'theta, the region's piece.
    """
    n, p = mplp.n_vars, mplp.dim
    rows = policy.active_rows
    poly = policy.polyhedron
    objective = np.concatenate([sense * mplp.adjustment_map[user], np.zeros(p)])
    cut = np.concatenate([mplp.c, -policy.piece_gradient])
    A_ub = np.vstack([
        np.hstack([mplp.A, -mplp.B]),
        np.hstack([np.zeros((poly.n_rows, n)), poly.H]),
        cut[None, :],
    ])
    b_ub = np.concatenate([mplp.t, poly.h, [policy.piece_intercept - mplp.offset + _OPTIMALITY_CUT_TOL]])
    result = solve_lp(LinearProgram(
        c=objective,
        A_ub=A_ub,
        b_ub=b_ub,
        A_eq=np.hstack([mplp.A[rows], -mplp.B[rows]]).reshape(len(rows), n + p),
        b_eq=mplp.t[rows],
    ))
    if not result.optimal:
        raise MpflexError(f"region {policy.region} LP is {result.status.value}.")
    x, theta = result.x[:n], result.x[n:]
    return float(mplp.adjustments(x)[user]), theta


def flexibility_in_region(policy: RegionPolicy, mplp: MpLp, user: int) -> FlexibilityInterval:
    """Smallest and largest adjustment of ``user`` over the region, with attaining parameters."""
    if not mplp.has_market:
        raise MpflexError("flexibility needs an MP-LP assembled from a market instance.")
    if policy.explicit:
        lower, lower_theta = _extreme_explicit(policy, user, 1.0)
        upper, upper_theta = _extreme_explicit(policy, user, -1.0)
    else:
        lower, lower_theta = _extreme_implicit(policy, mplp, user, 1.0)
        upper, upper_theta = _extreme_implicit(policy, mplp, user, -1.0)
    return FlexibilityInterval(
        region=policy.region, user=user, lower=lower, upper=upper,
        lower_theta=lower_theta, upper_theta=upper_theta,
    )


def flexibility_report(pwa: PwaValueFunction, mplp: MpLp, instance: MarketInstance) -> FlexibilityReport:
    """Global requirement of every elastic user: hull of its per-region intervals."""
    policies = map_concurrently(lambda r: recover_policy(r, pwa.piece_of(r), mplp), pwa.regions)
    elastic = [k for k, user in enumerate(instance.users) if user.elastic]
    intervals = map_concurrently(
        lambda job: flexibility_in_region(policies[job[0]], mplp, job[1]),
        [(i, k) for i in range(len(policies)) for k in elastic],
    )

    users = []
    for k in elastic:
        user = instance.users[k]
        own = [iv for iv in intervals if iv.user == k]
        lower = min(iv.lower for iv in own)
        upper = max(iv.upper for iv in own)
        lower_hits = [iv for iv in own if iv.lower <= lower + 1e-9]
        upper_hits = [iv for iv in own if iv.upper >= upper - 1e-9]
        users.append(UserFlexibility(
            user=k,
            name=user.name,
            demand=user.demand,
            lower=lower,
            upper=upper,
            lower_theta=lower_hits[0].lower_theta,
            upper_theta=upper_hits[0].upper_theta,
            lower_regions=[iv.region for iv in lower_hits],
            upper_regions=[iv.region for iv in upper_hits],
            lower_exploited=abs(user.demand + lower - user.lower) <= 1e-6,
            upper_exploited=abs(user.demand + upper - user.upper) <= 1e-6,
        ))
    return FlexibilityReport(users=users, intervals=intervals, policies=policies)
