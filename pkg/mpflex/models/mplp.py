# mpflex/models/mplp.py
import numpy as np
from pydantic import Field, model_validator

from mpflex.core.exceptions import ProblemDimensionError
from mpflex.models.arrays import Matrix, NumericModel, Vector
from mpflex.models.polytope import Polyhedron
from mpflex.models.programs import SolveStatus


class LinearizedDisutility(NumericModel):
    """Piecewise-linear interpolant of one user's disutility over its adjustment range.

    A pinned user (empty range) keeps a single breakpoint and owns no weight columns.
    """
    user: int
    breakpoints: Vector
    values: Vector
    curvature: float
    first_column: int | None = None

    @model_validator(mode="after")
    def _check(self):
        if self.breakpoints.size != self.values.size or self.breakpoints.size == 0:
            raise ProblemDimensionError("breakpoints and values must be non-empty and of equal length.")
        if np.any(np.diff(self.breakpoints) <= 0):
            raise ProblemDimensionError("breakpoints must be strictly increasing.")
        if self.breakpoints.size == 1 and self.first_column is not None:
            raise ProblemDimensionError("a pinned user owns no weight columns.")
        return self

    @property
    def knots(self) -> int:
        return self.breakpoints.size

    @property
    def columns(self) -> slice | None:
        if self.first_column is None:
            return None
        return slice(self.first_column, self.first_column + self.knots)

    @property
    def error_bound(self) -> float:
        """Worst overestimate of the interpolant: alpha * spacing^2 / 4."""
        if self.knots == 1:
            return 0.0
        return self.curvature * float(np.max(np.diff(self.breakpoints))) ** 2 / 4.0

    def interpolate(self, adjustment) -> np.ndarray:
        return np.interp(adjustment, self.breakpoints, self.values)


class MpLp(NumericModel):
    """v(theta) = offset + min c'x  s.t.  A x <= t + B theta, theta in a box.

    The market maps are optional so that bare parametric LPs can be analysed too:
    delta_d = adjustment_map x + adjustment_offset and
    q^c = adjustment_map x + schedule_offset - supply_map theta.
    ``demand_rhs`` holds dt/dd_k, the right-hand side response to each user's contract demand.
    """
    c: Vector
    A: Matrix
    t: Vector
    B: Matrix
    theta_lower: Vector
    theta_upper: Vector
    offset: float = 0.0
    user_names: list[str] = Field(default_factory=list)
    disutilities: list[LinearizedDisutility] = Field(default_factory=list)
    adjustment_map: Matrix | None = None
    adjustment_offset: Vector | None = None
    schedule_offset: Vector | None = None
    supply_map: Matrix | None = None
    demand_rhs: Matrix | None = None

    @model_validator(mode="after")
    def _check(self):
        m, n = self.A.shape
        p = self.theta_lower.size
        if self.c.size != n:
            raise ProblemDimensionError(f"c has {self.c.size} entries, A has {n} columns.")
        if self.t.size != m or self.B.shape != (m, p):
            raise ProblemDimensionError(f"t and B must have {m} rows and B {p} columns.")
        if self.theta_upper.size != p or np.any(self.theta_lower > self.theta_upper):
            raise ProblemDimensionError("parameter box is malformed.")
        if self.adjustment_map is not None:
            N = self.adjustment_map.shape[0]
            if (self.adjustment_map.shape[1] != n
                    or self.adjustment_offset is None or self.adjustment_offset.size != N
                    or self.schedule_offset is None or self.schedule_offset.size != N
                    or self.supply_map is None or self.supply_map.shape != (N, p)
                    or self.demand_rhs is None or self.demand_rhs.shape != (m, N)):
                raise ProblemDimensionError("market reconstruction maps do not fit the program.")
        return self

    @property
    def n_vars(self) -> int:
        return self.A.shape[1]

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def dim(self) -> int:
        return self.theta_lower.size

    @property
    def has_market(self) -> bool:
        return self.adjustment_map is not None

    def theta_box(self) -> Polyhedron:
        return Polyhedron.box(self.theta_lower, self.theta_upper)

    def rhs(self, theta) -> np.ndarray:
        return self.t + self.B @ np.asarray(theta, dtype=float)

    def adjustments(self, x) -> np.ndarray:
        return self.adjustment_map @ x + self.adjustment_offset

    def schedule(self, x, theta) -> np.ndarray:
        return self.adjustment_map @ x + self.schedule_offset - self.supply_map @ np.asarray(theta, dtype=float)


class LpEvaluation(NumericModel):
    status: SolveStatus
    theta: Vector
    value: float | None = None
    x: Vector | None = None
    gamma: Vector | None = None

    @property
    def optimal(self) -> bool:
        return self.status is SolveStatus.OPTIMAL
