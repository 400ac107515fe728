# mpflex/models/flexibility.py
import numpy as np
from pydantic import Field

from mpflex.models.arrays import Matrix, NumericModel, Vector
from mpflex.models.polytope import Polyhedron


class RegionPolicy(NumericModel):
    """Optimizer of the parametric LP on one critical region.

    ``explicit`` policies carry x(theta) = x_intercept + x_gradient theta and the matching
    affine adjustments; implicit ones keep only the active rows and are queried by LP.
    """
    region: int
    polyhedron: Polyhedron
    piece_intercept: float
    piece_gradient: Vector
    active_rows: list[int]
    explicit: bool
    x_intercept: Vector | None = None
    x_gradient: Matrix | None = None
    adjustment_intercept: Vector | None = None
    adjustment_gradient: Matrix | None = None

    def adjustments(self, theta) -> np.ndarray:
        if not self.explicit:
            raise ValueError("implicit policies have no closed-form adjustments.")
        return self.adjustment_intercept + self.adjustment_gradient @ np.asarray(theta, dtype=float)


class FlexibilityInterval(NumericModel):
    region: int
    user: int
    lower: float
    upper: float
    lower_theta: Vector
    upper_theta: Vector


class UserFlexibility(NumericModel):
    user: int
    name: str
    demand: float
    lower: float
    upper: float
    lower_theta: Vector
    upper_theta: Vector
    lower_regions: list[int]
    upper_regions: list[int]
    # Adjustment reaches the user's physical bound.
    lower_exploited: bool
    upper_exploited: bool

    @property
    def width(self) -> float:
        return self.upper - self.lower


class FlexibilityReport(NumericModel):
    users: list[UserFlexibility]
    intervals: list[FlexibilityInterval] = Field(default_factory=list)
    policies: list[RegionPolicy] = Field(default_factory=list)

    def ranking(self) -> list[UserFlexibility]:
        """Users ordered by requirement width, widest first; ties keep user order."""
        return sorted(self.users, key=lambda u: -u.width)

    def for_user(self, user: int) -> UserFlexibility:
        return next(u for u in self.users if u.user == user)
