# mpflex/services/avg.py
"""Adaptive vertex generation for the optimal value of a parametric LP.

Dual vertices gathered at sample parameters give affine minorants of v(theta); their
max is an underestimator. Each piece owns the region where it attains the max, and
because v is convex the worst gap inside a region sits at one of its vertices. LPs at
those vertices either certify the region or hand back new dual vertices.
"""
import logging
from typing import Sequence

import numpy as np

from mpflex.core.config import settings
from mpflex.core.exceptions import AvgError, InfeasibleParameterError, RegionRetrievalError
from mpflex.models.mplp import MpLp
from mpflex.models.polytope import Polyhedron
from mpflex.models.pwa import AvgIteration, CriticalRegion, GridCheck, Piece, PwaValueFunction, RegionError
from mpflex.services.concurrency import map_concurrently
from mpflex.services.mplp import box_vertices, evaluate_lp_at, verify_parameter_box
from mpflex.services.polytope import (
    chebyshev_ball,
    enumerate_vertices,
    is_empty,
    minimal_representation,
    prune_pieces,
)

logger = logging.getLogger(__name__)


def _same_piece(piece: Piece, intercept: float, gradient: np.ndarray, reach: np.ndarray) -> bool:
    """Pieces agree within tolerance at every theta with |theta_j| <= reach_j."""
    tol = settings.PIECE_TOL * (1.0 + abs(piece.intercept))
    spread = abs(piece.intercept - intercept) + float(np.abs(piece.gradient - gradient) @ reach)
    return spread <= tol


def build_underestimator(gammas: Sequence[np.ndarray], mplp: MpLp, existing: Sequence[Piece] = ()) -> list[Piece]:
    """One piece per distinct (m, n) among ``gammas`` that is not already in ``existing``."""
    reach = np.maximum(np.abs(mplp.theta_lower), np.abs(mplp.theta_upper))
    pieces: list[Piece] = []
    for gamma in gammas:
        gamma = np.asarray(gamma, dtype=float)
        intercept = float(gamma @ mplp.t) + mplp.offset
        gradient = gamma @ mplp.B
        if any(_same_piece(p, intercept, gradient, reach) for p in [*existing, *pieces]):
            continue
        pieces.append(Piece(intercept=intercept, gradient=gradient, gamma=gamma))
    return pieces


def _region_of(i: int, pieces: Sequence[Piece], domain: Polyhedron) -> CriticalRegion | None:
    own = pieces[i]
    rows, rhs = [], []
    for j, other in enumerate(pieces):
        if j == i:
            continue
        normal = other.gradient - own.gradient
        gap = own.intercept - other.intercept
        if np.linalg.norm(normal) <= 1e-12:
            if gap < -settings.PIECE_TOL * (1.0 + abs(own.intercept)):
                raise RegionRetrievalError(f"piece {i} lies below a parallel piece everywhere.")
            continue
        rows.append(normal)
        rhs.append(gap)
    poly = Polyhedron(
        H=np.vstack([np.array(rows).reshape(len(rows), domain.dim), domain.H]),
        h=np.concatenate([rhs, domain.h]),
    )
    if is_empty(poly):
        raise RegionRetrievalError(f"piece {i} attains the maximum nowhere on the domain.")
    reduced = minimal_representation(poly)
    center, radius = chebyshev_ball(reduced)
    if radius <= settings.REGION_RADIUS_TOL:
        logger.warning("piece %d only touches the maximum on a flat set; dropped", i)
        return None
    return CriticalRegion(index=-1, piece=i, polyhedron=reduced, center=center, radius=radius)


def retrieve_regions(pieces: Sequence[Piece], domain: Polyhedron) -> list[CriticalRegion]:
    """Critical region of every (pruned) piece, in minimal halfspace form."""
    found = map_concurrently(lambda i: _region_of(i, pieces, domain), range(len(pieces)))
    regions = []
    for region in found:
        if region is not None:
            regions.append(region.model_copy(update={"index": len(regions)}))
    return regions


def region_error(region: CriticalRegion, piece: Piece, mplp: MpLp, tolerance: float = 0.0) -> RegionError:
    """Worst gap v(theta) - piece(theta) over the region, found at its vertices."""
    vertices = enumerate_vertices(region.polyhedron).points
    worst, worst_theta, worst_gamma = -np.inf, None, None
    violations = []
    for theta in vertices:
        evaluation = evaluate_lp_at(mplp, theta)
        if not evaluation.optimal:
            raise InfeasibleParameterError(theta, f"LP is {evaluation.status.value} at a vertex of region {region.index}.")
        gap = evaluation.value - piece.value(theta)
        if gap > tolerance:
            violations.append(evaluation.gamma)
        if gap > worst:
            worst, worst_theta, worst_gamma = gap, theta, evaluation.gamma
    return RegionError(
        region=region.index,
        error=max(worst, 0.0),
        worst_theta=worst_theta,
        worst_gamma=worst_gamma,
        vertices=vertices,
        violations=violations,
    )


def default_samples(mplp: MpLp) -> list[np.ndarray]:
    return box_vertices(mplp) + [0.5 * (mplp.theta_lower + mplp.theta_upper)]


def run_avg(
    mplp: MpLp,
    epsilon: float | None = None,
    samples: Sequence[Sequence[float]] | None = None,
    max_iterations: int | None = None,
) -> PwaValueFunction:
    epsilon = settings.DEFAULT_EPSILON if epsilon is None else epsilon
    if epsilon <= 0:
        raise ValueError("epsilon must be positive.")
    max_iterations = settings.AVG_MAX_ITERATIONS if max_iterations is None else max_iterations
    domain = mplp.theta_box()
    verify_parameter_box(mplp)

    samples = default_samples(mplp) if samples is None else [np.asarray(s, dtype=float) for s in samples]
    gammas = []
    for theta in samples:
        if not domain.contains(theta):
            raise ValueError(f"initial sample {theta} lies outside the parameter box.")
        evaluation = evaluate_lp_at(mplp, theta)
        if not evaluation.optimal:
            raise InfeasibleParameterError(theta)
        gammas.append(evaluation.gamma)
    pieces = build_underestimator(gammas, mplp)
    added = len(pieces)

    trace: list[AvgIteration] = []
    for iteration in range(1, max_iterations + 1):
        survivors = prune_pieces(
            [p.intercept for p in pieces], np.array([p.gradient for p in pieces]), domain,
        )
        pieces = [pieces[i] for i in survivors]
        regions = retrieve_regions(pieces, domain)
        if not regions:
            raise RegionRetrievalError("no full-dimensional critical region survives; the parameter box is flat.")
        errors = map_concurrently(lambda r: region_error(r, pieces[r.piece], mplp, epsilon), regions)
        max_error = max(e.error for e in errors)
        trace.append(AvgIteration(
            iteration=iteration, max_error=max_error, pieces=len(pieces),
            regions=len(regions), new_pieces=added,
        ))
        logger.info(
            "avg iteration %d: max error %.6g, %d pieces, %d regions",
            iteration, max_error, len(pieces), len(regions),
        )
        if max_error <= epsilon:
            return PwaValueFunction(
                pieces=pieces, regions=regions, domain=domain,
                epsilon=max_error, tolerance=epsilon, trace=trace,
            )
        fresh = build_underestimator([g for e in errors for g in e.violations], mplp, existing=pieces)
        if not fresh:
            raise AvgError("error above tolerance but no new dual vertex was found.")
        added = len(fresh)
        pieces = pieces + fresh
    raise AvgError(f"no {epsilon:g}-certificate after {max_iterations} iterations.")


def grid_check(mplp: MpLp, pwa: PwaValueFunction, per_axis: int) -> GridCheck:
    """Compare v and its underestimator on a regular grid of LP solves."""
    if per_axis < 2:
        raise ValueError("a grid needs at least two points per axis.")
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(mplp.theta_lower, mplp.theta_upper)]
    points = np.array(np.meshgrid(*axes, indexing="ij")).reshape(mplp.dim, -1).T
    evaluations = map_concurrently(lambda theta: evaluate_lp_at(mplp, theta), points)
    lp_values = np.array([e.value if e.optimal else np.nan for e in evaluations])
    under = np.array([pwa.value(theta) for theta in points])
    gaps = (lp_values - under)[~np.isnan(lp_values)]
    return GridCheck(
        points=points,
        lp_values=lp_values,
        under_values=under,
        max_gap=float(gaps.max()) if gaps.size else 0.0,
        min_gap=float(gaps.min()) if gaps.size else 0.0,
        infeasible=int(np.isnan(lp_values).sum()),
    )
