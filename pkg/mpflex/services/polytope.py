# mpflex/services/polytope.py
"""Redundancy elimination, vertex enumeration and piece pruning for small polyhedra.

Redundancy uses the Farkas certificate: row j of {H theta <= h} is implied by the
others iff some v >= 0 has H_rest' v = H_j and h_rest' v <= h_j. Rows are scaled to
unit normals first so every tolerance is a distance in parameter space.
"""
import itertools
import logging
from typing import Sequence

import numpy as np

from mpflex.core.config import settings
from mpflex.core.exceptions import EmptyPolyhedronError, UnboundedPolyhedronError
from mpflex.models.polytope import Polyhedron, VertexSet
from mpflex.models.programs import LinearProgram, SolveStatus
from mpflex.services.solver import solve_lp

logger = logging.getLogger(__name__)

_BALL_CAP = 1e6


def _implied(H: np.ndarray, h: np.ndarray, row: np.ndarray, rhs: float) -> bool:
    if H.shape[0] == 0:
        return False
    k = H.shape[0]
    certificate = LinearProgram(
        c=np.zeros(k),
        A_eq=H.T,
        b_eq=row,
        A_ub=h[None, :],
        b_ub=[rhs + settings.REDUNDANCY_TOL],
        lower=np.zeros(k),
    )
    return solve_lp(certificate).optimal


def is_empty(poly: Polyhedron) -> bool:
    feasibility = LinearProgram(c=np.zeros(poly.dim), A_ub=poly.H, b_ub=poly.h)
    return solve_lp(feasibility).status is SolveStatus.INFEASIBLE


def chebyshev_ball(poly: Polyhedron) -> tuple[np.ndarray, float]:
    """Centre and radius of the largest ball inside ``poly`` (radius capped)."""
    norms = np.linalg.norm(poly.H, axis=1)
    c = np.zeros(poly.dim + 1)
    c[-1] = -1.0
    lower = np.full(poly.dim + 1, -np.inf)
    upper = np.full(poly.dim + 1, np.inf)
    lower[-1], upper[-1] = 0.0, _BALL_CAP
    result = solve_lp(LinearProgram(
        c=c, A_ub=np.hstack([poly.H, norms[:, None]]), b_ub=poly.h, lower=lower, upper=upper,
    ))
    if not result.optimal:
        raise EmptyPolyhedronError()
    return result.x[:-1], float(result.x[-1])


def is_redundant(poly: Polyhedron, j: int) -> bool:
    """True iff dropping row ``j`` leaves the point set of ``poly`` unchanged."""
    if not 0 <= j < poly.n_rows:
        raise IndexError(f"row {j} out of range for a polyhedron with {poly.n_rows} rows.")
    unit = poly.normalized()
    rest = [i for i in range(poly.n_rows) if i != j]
    return _implied(unit.H[rest], unit.h[rest], unit.H[j], unit.h[j])


def minimal_representation(poly: Polyhedron) -> Polyhedron:
    """Drop redundant rows one at a time, keeping survivors in their original order."""
    if is_empty(poly):
        raise EmptyPolyhedronError()
    unit = poly.normalized()
    keep = list(range(poly.n_rows))
    for j in range(poly.n_rows):
        rest = [i for i in keep if i != j]
        if _implied(unit.H[rest], unit.h[rest], unit.H[j], unit.h[j]):
            keep.remove(j)
    return poly.select(keep)


def _check_bounded(poly: Polyhedron) -> None:
    for axis in range(poly.dim):
        for direction in (1.0, -1.0):
            c = np.zeros(poly.dim)
            c[axis] = direction
            extent = solve_lp(LinearProgram(c=c, A_ub=poly.H, b_ub=poly.h))
            if extent.status is SolveStatus.UNBOUNDED:
                raise UnboundedPolyhedronError(f"polyhedron is unbounded along axis {axis}.")
            if extent.status is SolveStatus.INFEASIBLE:
                raise EmptyPolyhedronError()


def enumerate_vertices(poly: Polyhedron) -> VertexSet:
    """All vertices of a bounded polyhedron by solving every p-subset of facets."""
    _check_bounded(poly)
    unit = poly.normalized()
    tol = settings.POLYTOPE_TOL
    points: list[np.ndarray] = []
    for subset in itertools.combinations(range(poly.n_rows), poly.dim):
        rows = list(subset)
        system = unit.H[rows]
        if np.linalg.cond(system) > 1e12:
            continue
        point = np.linalg.solve(system, unit.h[rows])
        if np.any(unit.H @ point > unit.h + tol):
            continue
        if any(np.max(np.abs(point - seen)) <= tol * max(1.0, np.max(np.abs(seen))) for seen in points):
            continue
        points.append(point)
    points.sort(key=tuple)
    return VertexSet(points=np.array(points).reshape(len(points), poly.dim), polyhedron=poly)


def prune_pieces(intercepts: Sequence[float], gradients: np.ndarray, domain: Polyhedron) -> list[int]:
    """Indices of the affine pieces that attain max_i(m_i + n_i' theta) somewhere on ``domain``.

    Works on the epigraph {(theta, kappa) | kappa >= m_i + n_i' theta, theta in domain}:
    a piece is dropped when its epigraph row is implied by the remaining rows.
    """
    intercepts = np.asarray(intercepts, dtype=float)
    gradients = np.asarray(gradients, dtype=float).reshape(intercepts.size, domain.dim)
    if intercepts.size <= 1:
        return list(range(intercepts.size))
    if is_empty(domain):
        raise EmptyPolyhedronError("pruning domain is empty.")
    pieces = np.hstack([gradients, -np.ones((intercepts.size, 1))])
    bounds = np.hstack([domain.H, np.zeros((domain.n_rows, 1))])
    H = np.vstack([pieces, bounds])
    h = np.concatenate([-intercepts, domain.h])
    norms = np.linalg.norm(H, axis=1)
    H = H / norms[:, None]
    h = h / norms
    domain_rows = list(range(intercepts.size, H.shape[0]))
    keep = list(range(intercepts.size))
    for i in range(intercepts.size):
        rest = [k for k in keep if k != i] + domain_rows
        if _implied(H[rest], h[rest], H[i], h[i]):
            keep.remove(i)
    logger.debug("pruned %d of %d pieces", intercepts.size - len(keep), intercepts.size)
    return keep
