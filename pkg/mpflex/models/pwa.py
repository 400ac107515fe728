# mpflex/models/pwa.py
import numpy as np
from pydantic import Field

from mpflex.models.arrays import Matrix, NumericModel, Vector
from mpflex.models.polytope import Polyhedron


class Piece(NumericModel):
    """Affine minorant m + n'theta generated by the dual vertex gamma."""
    intercept: float
    gradient: Vector
    gamma: Vector

    def value(self, theta) -> float:
        return float(self.intercept + self.gradient @ np.asarray(theta, dtype=float))


class CriticalRegion(NumericModel):
    index: int
    piece: int
    polyhedron: Polyhedron
    center: Vector
    radius: float


class RegionError(NumericModel):
    region: int
    error: float
    worst_theta: Vector
    worst_gamma: Vector
    vertices: Matrix
    # Dual vertices found at region corners whose gap exceeded the tolerance.
    violations: list[Vector] = Field(default_factory=list)


class AvgIteration(NumericModel):
    iteration: int
    max_error: float
    pieces: int
    regions: int
    new_pieces: int


class PwaValueFunction(NumericModel):
    """max_i (m_i + n_i'theta) over Theta with one critical region per piece."""
    pieces: list[Piece]
    regions: list[CriticalRegion]
    domain: Polyhedron
    epsilon: float
    tolerance: float
    trace: list[AvgIteration] = Field(default_factory=list)

    def value(self, theta) -> float:
        return max(piece.value(theta) for piece in self.pieces)

    def locate(self, theta, strict: bool = False) -> list[int]:
        """Indices of the regions containing ``theta`` (in their interior if ``strict``)."""
        if strict:
            return [r.index for r in self.regions if r.polyhedron.strictly_contains(theta)]
        return [r.index for r in self.regions if r.polyhedron.contains(theta)]

    def piece_of(self, region: CriticalRegion) -> Piece:
        return self.pieces[region.piece]


class GridCheck(NumericModel):
    """Empirical gap between v and its underestimator on a regular parameter grid."""
    points: Matrix
    lp_values: Vector
    under_values: Vector
    max_gap: float
    min_gap: float
    infeasible: int
