# mpflex/services/market.py
"""Energy-sharing market: DC network sensitivities, operator clearing, user bidding,
the central welfare problem and the best-response mechanism.

Sign convention: a positive schedule q^c is a net purchase, so user k injects -q^c_k
at its bus. Fixed inelastic loads are withdrawals and enter the balance
sum_k q^c_k + sum_b L_b = 0 as well as every line flow.
"""
import logging

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from mpflex.core.config import settings
from mpflex.core.exceptions import MpflexError, NetworkError
from mpflex.models.market import (
    BestResponseResult,
    BestResponseRound,
    BestResponseStatus,
    CentralSolution,
    ClearingResult,
    Equilibrium,
    MarketInstance,
    Network,
    User,
    UserKind,
)
from mpflex.models.programs import QuadraticProgram, SolveStatus
from mpflex.services.concurrency import map_concurrently
from mpflex.services.solver import solve_qp

logger = logging.getLogger(__name__)


def compute_ptdf(network: Network) -> np.ndarray:
    """Line-by-bus shift factors: flow on line l per unit injection at bus b, withdrawn at the slack."""
    n = network.buses
    lines = network.lines
    if n > 1:
        graph = csr_matrix(
            (np.ones(len(lines)), ([l.from_bus for l in lines], [l.to_bus for l in lines])),
            shape=(n, n),
        )
        components, _ = connected_components(graph, directed=False)
        if components > 1:
            raise NetworkError(f"network splits into {components} islands.")
    incidence = np.zeros((len(lines), n))
    for i, line in enumerate(lines):
        incidence[i, line.from_bus] = 1.0
        incidence[i, line.to_bus] = -1.0
    branch = incidence / np.array([l.reactance for l in lines])[:, None] if lines else incidence
    nodal = incidence.T @ branch
    keep = [b for b in range(n) if b != network.slack]
    ptdf = np.zeros((len(lines), n))
    if keep:
        reduced = nodal[np.ix_(keep, keep)]
        if np.linalg.cond(reduced) > 1e14:
            raise NetworkError("reduced susceptance matrix is singular.")
        ptdf[:, keep] = branch[:, keep] @ np.linalg.inv(reduced)
    return ptdf


def user_incidence(instance: MarketInstance) -> np.ndarray:
    """Bus-by-user 0/1 matrix placing every user on its bus."""
    G = np.zeros((instance.network.buses, instance.n_users))
    for k, user in enumerate(instance.users):
        G[user.bus, k] = 1.0
    return G


def line_flows(instance: MarketInstance, schedule, ptdf: np.ndarray | None = None) -> np.ndarray:
    """DC flows (from-bus to to-bus) produced by ``schedule`` and the inelastic loads."""
    ptdf = compute_ptdf(instance.network) if ptdf is None else ptdf
    injections = -user_incidence(instance) @ np.asarray(schedule, dtype=float) - instance.loads()
    return ptdf @ injections


def flow_rows(instance: MarketInstance, ptdf: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Limited-line flows written as flow = -S q^c - base; returns (S, base, limits)."""
    limited = instance.network.limited_lines()
    S = ptdf[limited] @ user_incidence(instance)
    base = ptdf[limited] @ instance.loads()
    limits = np.array([instance.network.lines[i].limit for i in limited], dtype=float)
    return S, base, limits


def scale_line_limits(instance: MarketInstance, factor: float) -> MarketInstance:
    """Copy of ``instance`` with every finite line limit multiplied by ``factor``."""
    if factor <= 0:
        raise ValueError("limit scale must be positive.")
    lines = [
        line.model_copy(update={"limit": None if line.limit is None else line.limit * factor})
        for line in instance.network.lines
    ]
    network = instance.network.model_copy(update={"lines": lines})
    return instance.model_copy(update={"network": network})


def _network_constraints(instance: MarketInstance, ptdf: np.ndarray, offset: int, width: int):
    """Balance row and two-sided flow rows on the q^c block starting at column ``offset``."""
    N = instance.n_users
    S, base, limits = flow_rows(instance, ptdf)
    balance = np.zeros((1, width))
    balance[0, offset: offset + N] = 1.0
    A_ub = np.zeros((2 * limits.size, width))
    A_ub[: limits.size, offset: offset + N] = -S
    A_ub[limits.size:, offset: offset + N] = S
    b_ub = np.concatenate([limits + base, limits - base])
    return balance, np.array([-instance.loads().sum()]), A_ub, b_ub


def solve_central(instance: MarketInstance, theta) -> CentralSolution:
    """Minimise total disutility subject to balance, line limits and adjustment ranges.

    Variables are [delta_d, q^c]; the defining rows q^c_k - delta_d_k = d_k - supply_k
    carry the multipliers eta_k.
    """
    theta = np.asarray(theta, dtype=float).reshape(instance.n_parameters)
    N = instance.n_users
    users = instance.users
    ptdf = compute_ptdf(instance.network)
    balance, balance_rhs, A_ub, b_ub = _network_constraints(instance, ptdf, N, 2 * N)
    defining = np.hstack([-np.eye(N), np.eye(N)])
    ranges = np.array([u.adjustment_range for u in users])
    qp = QuadraticProgram(
        Q=np.diag(np.concatenate([[2.0 * u.alpha for u in users], np.zeros(N)])),
        c=np.concatenate([[u.beta for u in users], np.zeros(N)]),
        constant=float(sum(u.zeta for u in users)),
        A_eq=np.vstack([defining, balance]),
        b_eq=np.concatenate([instance.demands() - instance.supply(theta), balance_rhs]),
        A_ub=A_ub,
        b_ub=b_ub,
        lower=np.concatenate([ranges[:, 0], np.full(N, -np.inf)]),
        upper=np.concatenate([ranges[:, 1], np.full(N, np.inf)]),
    )
    result = solve_qp(qp)
    if not result.optimal:
        logger.info("central problem infeasible at theta=%s", theta)
        return CentralSolution(status=result.status, source="quadratic", theta=theta)
    return CentralSolution(
        status=SolveStatus.OPTIMAL,
        source="quadratic",
        theta=theta,
        delta_d=result.x[:N],
        schedule=result.x[N:],
        eta=result.dual_eq[:N],
        cost=result.objective,
    )


def recover_gne(central: CentralSolution, instance: MarketInstance) -> Equilibrium:
    """Equilibrium bids and gaps from the central optimum: delta_k = -eta_k / tau."""
    if not central.optimal:
        raise MpflexError("equilibrium recovery needs an optimal central solution.")
    gaps = -central.eta / instance.tau
    return Equilibrium(
        theta=central.theta,
        delta_d=central.delta_d,
        bids=central.schedule - gaps,
        schedule=central.schedule,
        gaps=gaps,
        eta=central.eta,
        cost=central.cost,
    )


def operator_clear(bids, instance: MarketInstance, ptdf: np.ndarray | None = None) -> ClearingResult:
    """Closest balanced, line-feasible schedule to the bids in the least-squares sense."""
    bids = np.asarray(bids, dtype=float)
    if not np.all(np.isfinite(bids)):
        raise ValueError("bids must be finite.")
    N = instance.n_users
    ptdf = compute_ptdf(instance.network) if ptdf is None else ptdf
    balance, balance_rhs, A_ub, b_ub = _network_constraints(instance, ptdf, 0, N)
    qp = QuadraticProgram(
        Q=2.0 * np.eye(N), c=-2.0 * bids, constant=float(bids @ bids),
        A_eq=balance, b_eq=balance_rhs, A_ub=A_ub, b_ub=b_ub,
    )
    result = solve_qp(qp)
    if not result.optimal:
        return ClearingResult(status=result.status)
    return ClearingResult(status=SolveStatus.OPTIMAL, schedule=result.x, gaps=result.x - bids)


def user_best_response(user: User, schedule: float, gap: float, deviation: float, tau: float) -> tuple[float, float]:
    """Adjustment and bid minimising f(x) + tau/2 (q^c - q)^2 with q fixed by the balance row.

    The balance q + gap = d + x - supply reduces the problem to a univariate quadratic in x
    whose clamped stationary point is the answer.
    """
    supply = user.forecast + deviation if user.kind is UserKind.PROSUMER else 0.0
    target = schedule + gap - user.demand + supply
    lo, hi = user.adjustment_range
    adjustment = float(np.clip((tau * target - user.beta) / (2.0 * user.alpha + tau), lo, hi))
    bid = user.demand + adjustment - supply - gap
    return adjustment, bid


def simulate_best_response(
    instance: MarketInstance,
    theta,
    tol: float | None = None,
    max_iter: int | None = None,
) -> BestResponseResult:
    """Jacobi rounds: every user answers the last schedule and gap, then the operator clears.

    A round only counts as settled when neither the schedule nor the bids move by ``tol``.
    A balanced schedule can stand still while the bids are still drifting, for example when
    a single user is pinned by the balance row.
    """
    tol = settings.BEST_RESPONSE_TOL if tol is None else tol
    max_iter = settings.BEST_RESPONSE_MAX_ITER if max_iter is None else max_iter
    theta = np.asarray(theta, dtype=float).reshape(instance.n_parameters)
    ptdf = compute_ptdf(instance.network)
    supply = instance.supply(theta)
    deviations = [theta[u.parameter] if u.kind is UserKind.PROSUMER else 0.0 for u in instance.users]
    prosumer = np.array([u.kind is UserKind.PROSUMER for u in instance.users])
    bids = np.where(prosumer, instance.demands() - supply, 0.0)

    clearing = operator_clear(bids, instance, ptdf)
    if clearing.status is not SolveStatus.OPTIMAL:
        return BestResponseResult(status=BestResponseStatus.INFEASIBLE)

    rounds: list[BestResponseRound] = []
    previous_bids = bids
    for iteration in range(1, max_iter + 1):
        schedule, gaps = clearing.schedule, clearing.gaps
        responses = map_concurrently(
            lambda k: user_best_response(instance.users[k], schedule[k], gaps[k], deviations[k], instance.tau),
            range(instance.n_users),
        )
        delta_d = np.array([r[0] for r in responses])
        bids = np.array([r[1] for r in responses])
        clearing = operator_clear(bids, instance, ptdf)
        if clearing.status is not SolveStatus.OPTIMAL:
            return BestResponseResult(status=BestResponseStatus.INFEASIBLE, rounds=rounds)
        change = float(max(np.max(np.abs(clearing.schedule - schedule)), np.max(np.abs(bids - previous_bids))))
        previous_bids = bids
        rounds.append(BestResponseRound(
            iteration=iteration, delta_d=delta_d, gaps=clearing.gaps,
            schedule=clearing.schedule, change=change,
        ))
        if change < tol:
            logger.info("best response converged after %d rounds", iteration)
            equilibrium = Equilibrium(
                theta=theta,
                delta_d=delta_d,
                bids=bids,
                schedule=clearing.schedule,
                gaps=clearing.gaps,
                eta=-instance.tau * clearing.gaps,
                cost=float(sum(u.disutility(x) for u, x in zip(instance.users, delta_d))),
            )
            return BestResponseResult(status=BestResponseStatus.CONVERGED, equilibrium=equilibrium, rounds=rounds)
    logger.warning("best response did not converge within %d rounds", max_iter)
    return BestResponseResult(status=BestResponseStatus.NOT_CONVERGED, rounds=rounds)
