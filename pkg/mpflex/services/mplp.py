# mpflex/services/mplp.py
"""Convex-combination linearization of the central problem and its parametric LP form.

Every user with a non-empty range gets K weights sigma over uniform breakpoints xi;
delta_d = sum sigma xi and the cost is sum sigma z. No adjacency constraints are needed
because the interpolated cost is convex. The schedules q^c are substituted out so that
the parameter only appears in the right-hand side t + B theta. Equalities are written
as pairs of "<=" rows, hence the dual lives in {gamma | A'gamma = c, gamma <= 0}.
"""
import itertools
import logging
from typing import TextIO

import numpy as np

from mpflex.core.exceptions import InfeasibleParameterError, MpflexError
from mpflex.models.market import CentralSolution, MarketInstance, User, UserKind
from mpflex.models.mplp import LinearizedDisutility, LpEvaluation, MpLp
from mpflex.models.programs import LinearProgram, SolveStatus
from mpflex.services.market import compute_ptdf, flow_rows
from mpflex.services.solver import solve_lp

logger = logging.getLogger(__name__)


def linearize_disutility(user: User, K: int, index: int = 0, first_column: int | None = None) -> LinearizedDisutility:
    """Sample the user's disutility at K uniform breakpoints over its adjustment range."""
    if K < 2:
        raise ValueError("at least two breakpoints are required.")
    lo, hi = user.adjustment_range
    if hi <= lo:
        breakpoints = np.array([lo])
        first_column = None
    else:
        breakpoints = np.linspace(lo, hi, K)
    return LinearizedDisutility(
        user=index,
        breakpoints=breakpoints,
        values=user.disutility(breakpoints),
        curvature=user.alpha,
        first_column=first_column,
    )


def assemble_mplp(instance: MarketInstance, K: int | None = None) -> MpLp:
    K = instance.segments if K is None else K
    N, p = instance.n_users, instance.n_parameters
    if p == 0:
        raise MpflexError("the instance has no deviation parameters to analyse.")

    disutilities = []
    column = 0
    for k, user in enumerate(instance.users):
        lin = linearize_disutility(user, K, index=k, first_column=column if user.elastic else None)
        disutilities.append(lin)
        if lin.columns is not None:
            column += lin.knots
    n = column

    c = np.zeros(n)
    D = np.zeros((N, n))
    adjustment_offset = np.zeros(N)
    offset = 0.0
    for lin in disutilities:
        if lin.columns is None:
            adjustment_offset[lin.user] = lin.breakpoints[0]
            offset += float(lin.values[0])
        else:
            D[lin.user, lin.columns] = lin.breakpoints
            c[lin.columns] = lin.values

    W = np.zeros((N, p))
    forecasts = np.zeros(N)
    for k, user in enumerate(instance.users):
        if user.kind is UserKind.PROSUMER:
            W[k, user.parameter] = 1.0
            forecasts[k] = user.forecast
    schedule_offset = instance.demands() + adjustment_offset - forecasts

    blocks_A, blocks_t0, blocks_T = [], [], []

    def add(rows, t0, demand_rhs):
        blocks_A.append(np.atleast_2d(rows))
        blocks_t0.append(np.atleast_1d(t0))
        blocks_T.append(np.atleast_2d(demand_rhs))

    add(-np.eye(n), np.zeros(n), np.zeros((n, N)))
    for lin in disutilities:
        if lin.columns is None:
            continue
        row = np.zeros(n)
        row[lin.columns] = 1.0
        add(np.vstack([row, -row]), [1.0, -1.0], np.zeros((2, N)))

    total = D.sum(axis=0)
    load = float(instance.loads().sum())
    add(np.vstack([total, -total]), [-load, load], np.vstack([-np.ones(N), np.ones(N)]))

    S, base, limits = flow_rows(instance, compute_ptdf(instance.network))
    if limits.size:
        add(np.vstack([-S @ D, S @ D]), np.concatenate([limits + base, limits - base]), np.vstack([S, -S]))

    A = np.vstack(blocks_A)
    demand_rhs = np.vstack(blocks_T)
    t = np.concatenate(blocks_t0) + demand_rhs @ schedule_offset
    B = -demand_rhs @ W
    mplp = MpLp(
        c=c, A=A, t=t, B=B,
        theta_lower=instance.theta_lower(), theta_upper=instance.theta_upper(),
        offset=offset,
        user_names=[u.name for u in instance.users],
        disutilities=disutilities,
        adjustment_map=D,
        adjustment_offset=adjustment_offset,
        schedule_offset=schedule_offset,
        supply_map=W,
        demand_rhs=demand_rhs,
    )
    logger.debug("assembled MP-LP with %d variables, %d rows, %d parameters", n, A.shape[0], p)
    return mplp


def evaluate_lp_at(mplp: MpLp, theta) -> LpEvaluation:
    """Optimal value, a primal vertex and the dual vertex gamma at one parameter value."""
    theta = np.asarray(theta, dtype=float).reshape(mplp.dim)
    result = solve_lp(LinearProgram(c=mplp.c, A_ub=mplp.A, b_ub=mplp.rhs(theta)))
    if not result.optimal:
        return LpEvaluation(status=result.status, theta=theta)
    return LpEvaluation(
        status=SolveStatus.OPTIMAL,
        theta=theta,
        value=result.objective + mplp.offset,
        x=result.x,
        gamma=result.dual_ub,
    )


def box_vertices(mplp: MpLp) -> list[np.ndarray]:
    return [np.array(corner) for corner in itertools.product(*zip(mplp.theta_lower, mplp.theta_upper))]


def verify_parameter_box(mplp: MpLp) -> None:
    """Raise unless the LP is feasible on every corner of the box, hence on all of it."""
    for corner in box_vertices(mplp):
        evaluation = evaluate_lp_at(mplp, corner)
        if evaluation.status is SolveStatus.INFEASIBLE:
            raise InfeasibleParameterError(corner)
        if evaluation.status is SolveStatus.UNBOUNDED:
            raise MpflexError("the parametric LP is unbounded; its feasible set must be bounded.")


def solve_central_linearized(mplp: MpLp, theta) -> CentralSolution:
    """Central dispatch of the linearized problem in market terms.

    eta_k is the sensitivity of the optimal cost to user k's contract demand,
    gamma' dt/dd_k, which matches the sign of the quadratic problem's multipliers.
    """
    if not mplp.has_market:
        raise MpflexError("this MP-LP carries no market reconstruction maps.")
    evaluation = evaluate_lp_at(mplp, theta)
    if not evaluation.optimal:
        return CentralSolution(status=evaluation.status, source="linearized", theta=evaluation.theta)
    return CentralSolution(
        status=SolveStatus.OPTIMAL,
        source="linearized",
        theta=evaluation.theta,
        delta_d=mplp.adjustments(evaluation.x),
        schedule=mplp.schedule(evaluation.x, evaluation.theta),
        eta=mplp.demand_rhs.T @ evaluation.gamma,
        cost=evaluation.value,
    )


def export_matrices(mplp: MpLp, stream: TextIO) -> None:
    """Plain-text dump of the program data for checking with external tools."""
    stream.write(f"# mpflex MP-LP: {mplp.n_vars} variables, {mplp.n_rows} rows, {mplp.dim} parameters\n")
    stream.write(f"# offset\n{mplp.offset:.12g}\n")
    for label, array in (("c", mplp.c), ("A", mplp.A), ("t", mplp.t), ("B", mplp.B),
                         ("theta_lower", mplp.theta_lower), ("theta_upper", mplp.theta_upper)):
        stream.write(f"# {label} {' '.join(str(s) for s in np.atleast_1d(array).shape)}\n")
        np.savetxt(stream, np.atleast_2d(array), fmt="%.12g")
    for lin in mplp.disutilities:
        name = mplp.user_names[lin.user] if mplp.user_names else str(lin.user)
        columns = "pinned" if lin.columns is None else f"columns {lin.columns.start}-{lin.columns.stop - 1}"
        stream.write(f"# user {name}: {columns}\n")
        np.savetxt(stream, np.vstack([lin.breakpoints, lin.values]), fmt="%.12g")
