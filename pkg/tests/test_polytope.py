import numpy as np
import pytest
from scipy.optimize import linprog
from scipy.spatial import ConvexHull, HalfspaceIntersection

from mpflex.core.exceptions import EmptyPolyhedronError, ProblemDimensionError, UnboundedPolyhedronError
from mpflex.models.polytope import Polyhedron
from mpflex.services.polytope import (
    chebyshev_ball,
    enumerate_vertices,
    is_empty,
    is_redundant,
    minimal_representation,
    prune_pieces,
)


def random_polytope(rng, dim: int, extra: int) -> Polyhedron:
    box = Polyhedron.box(-np.ones(dim), np.ones(dim))
    rows = rng.normal(size=(extra, dim))
    return box.intersect(Polyhedron(H=rows, h=rng.uniform(0.2, 1.5, size=extra)))


def test_box_with_a_loose_row():
    poly = Polyhedron.box([0, 0], [1, 1]).intersect(Polyhedron(H=[[1, 0]], h=[5]))

    assert [is_redundant(poly, j) for j in range(poly.n_rows)] == [False] * 4 + [True]
    reduced = minimal_representation(poly)
    assert np.array_equal(reduced.H, poly.H[:4])


def test_duplicate_rows_collapse_to_one():
    poly = Polyhedron(H=[[1, 0], [1, 0], [-1, 0], [0, 1], [0, -1]], h=[1, 1, 0, 1, 0])
    assert minimal_representation(poly).n_rows == 4


def test_is_redundant_rejects_bad_index():
    with pytest.raises(IndexError):
        is_redundant(Polyhedron.box([0], [1]), 2)


@pytest.mark.parametrize("seed", range(100))
def test_redundancy_agrees_with_row_maximisation(seed):
    rng = np.random.default_rng(seed)
    poly = random_polytope(rng, dim=2 + seed % 2, extra=4)

    for j in range(poly.n_rows):
        rest = [i for i in range(poly.n_rows) if i != j]
        oracle = linprog(-poly.H[j], A_ub=poly.H[rest], b_ub=poly.h[rest], bounds=(None, None), method="highs")
        if oracle.status == 3:
            assert not is_redundant(poly, j)
            continue
        peak = -oracle.fun
        if abs(peak - poly.h[j]) < 1e-6:
            continue
        assert is_redundant(poly, j) == (peak < poly.h[j])


@pytest.mark.parametrize("seed", range(100))
def test_minimal_representation_is_idempotent_and_keeps_membership(seed):
    rng = np.random.default_rng(500 + seed)
    dim = 2 + seed % 2
    poly = random_polytope(rng, dim=dim, extra=6)

    reduced = minimal_representation(poly)
    again = minimal_representation(reduced)
    assert np.array_equal(again.H, reduced.H) and np.array_equal(again.h, reduced.h)

    samples = rng.uniform(-1.2, 1.2, size=(1000, dim))
    before = [poly.contains(theta, tol=0.0) for theta in samples]
    after = [reduced.contains(theta, tol=0.0) for theta in samples]
    assert before == after


@pytest.mark.parametrize("seed,dim", [(s, 2 + s % 2) for s in range(20)])
def test_vertices_match_qhull(seed, dim):
    rng = np.random.default_rng(1000 + seed)
    poly = random_polytope(rng, dim=dim, extra=5)

    found = enumerate_vertices(poly).points
    oracle = HalfspaceIntersection(np.hstack([poly.H, -poly.h[:, None]]), np.zeros(dim)).intersections
    hull = ConvexHull(oracle)
    expected = oracle[hull.vertices]

    assert len(found) == len(expected)
    for vertex in expected:
        assert np.min(np.max(np.abs(found - vertex), axis=1)) < 1e-6


def test_vertices_are_sorted_and_unique():
    vertices = enumerate_vertices(Polyhedron.box([0, 0], [1, 2])).points
    assert vertices.tolist() == [[0, 0], [0, 2], [1, 0], [1, 2]]


def test_unbounded_and_empty_polyhedra():
    quadrant = Polyhedron(H=[[-1, 0], [0, -1]], h=[0, 0])
    with pytest.raises(UnboundedPolyhedronError):
        enumerate_vertices(quadrant)

    empty = Polyhedron(H=[[1.0], [-1.0]], h=[0.0, -1.0])
    assert is_empty(empty)
    with pytest.raises(EmptyPolyhedronError):
        minimal_representation(empty)
    with pytest.raises(EmptyPolyhedronError):
        chebyshev_ball(empty)


def test_chebyshev_ball_of_a_rectangle():
    center, radius = chebyshev_ball(Polyhedron.box([0, 0], [2, 4]))
    assert radius == pytest.approx(1.0)
    assert center[0] == pytest.approx(1.0)


def test_polyhedron_dimension_is_limited():
    with pytest.raises(ProblemDimensionError):
        Polyhedron.box(np.zeros(7), np.ones(7))
    with pytest.raises(ProblemDimensionError):
        Polyhedron(H=[[0.0, 0.0]], h=[1.0])


def test_prune_drops_a_piece_that_never_attains_the_max():
    keep = prune_pieces([0.0, 0.0, -10.0], np.array([[1.0], [-1.0], [0.0]]), Polyhedron.box([-1], [1]))
    assert keep == [0, 1]


@pytest.mark.parametrize("seed", range(10))
def test_pruning_preserves_the_maximum(seed):
    rng = np.random.default_rng(seed)
    domain = Polyhedron.box([-1, -1], [1, 1])
    intercepts = rng.normal(size=8)
    gradients = rng.normal(size=(8, 2))

    keep = prune_pieces(intercepts, gradients, domain)
    samples = rng.uniform(-1, 1, size=(500, 2))
    full = np.max(intercepts[None, :] + samples @ gradients.T, axis=1)
    kept = np.max(intercepts[keep][None, :] + samples @ gradients[keep].T, axis=1)

    assert keep
    assert np.allclose(full, kept, atol=1e-9)
