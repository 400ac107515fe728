# mpflex/models/polytope.py
from typing import Sequence

import numpy as np
from pydantic import model_validator

from mpflex.core.config import settings
from mpflex.core.exceptions import ProblemDimensionError
from mpflex.models.arrays import Matrix, NumericModel, Vector

MAX_DIMENSION = 6


class Polyhedron(NumericModel):
    """{theta | H theta <= h} in a parameter space of dimension at most six."""
    H: Matrix
    h: Vector

    @model_validator(mode="after")
    def _shapes(self):
        if self.H.shape[0] != self.h.size:
            raise ProblemDimensionError(f"H has {self.H.shape[0]} rows but h has {self.h.size} entries.")
        if not 1 <= self.H.shape[1] <= MAX_DIMENSION:
            raise ProblemDimensionError(f"parameter dimension must be 1..{MAX_DIMENSION}, got {self.H.shape[1]}.")
        if not (np.all(np.isfinite(self.H)) and np.all(np.isfinite(self.h))):
            raise ProblemDimensionError("halfspace data must be finite.")
        if self.H.shape[0] and np.min(np.linalg.norm(self.H, axis=1)) <= 1e-12:
            raise ProblemDimensionError("halfspace normals must be nonzero.")
        return self

    @classmethod
    def box(cls, lower: Sequence[float], upper: Sequence[float]) -> "Polyhedron":
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        eye = np.eye(lower.size)
        return cls(H=np.vstack([eye, -eye]), h=np.concatenate([upper, -lower]))

    @property
    def dim(self) -> int:
        return self.H.shape[1]

    @property
    def n_rows(self) -> int:
        return self.H.shape[0]

    def normalized(self) -> "Polyhedron":
        norms = np.linalg.norm(self.H, axis=1)
        return Polyhedron(H=self.H / norms[:, None], h=self.h / norms)

    def select(self, rows: Sequence[int]) -> "Polyhedron":
        rows = list(rows)
        return Polyhedron(H=self.H[rows].reshape(len(rows), self.dim), h=self.h[rows])

    def intersect(self, other: "Polyhedron") -> "Polyhedron":
        return Polyhedron(H=np.vstack([self.H, other.H]), h=np.concatenate([self.h, other.h]))

    def slack(self, theta) -> np.ndarray:
        """Distance of ``theta`` to each facet hyperplane, positive inside."""
        unit = self.normalized()
        return unit.h - unit.H @ np.asarray(theta, dtype=float)

    def contains(self, theta, tol: float | None = None) -> bool:
        tol = settings.POLYTOPE_TOL if tol is None else tol
        return bool(np.all(self.slack(theta) >= -tol))

    def strictly_contains(self, theta, tol: float = 1e-9) -> bool:
        return bool(np.all(self.slack(theta) > tol))


class VertexSet(NumericModel):
    points: Matrix
    polyhedron: Polyhedron

    def __len__(self) -> int:
        return self.points.shape[0]
