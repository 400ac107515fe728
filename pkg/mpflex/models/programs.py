# mpflex/models/programs.py
from enum import Enum

import numpy as np
from pydantic import model_validator

from mpflex.core.exceptions import NotPositiveDefiniteError, ProblemDimensionError
from mpflex.models.arrays import Matrix, NumericModel, Vector


class SolveStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


def _fill_constraint_defaults(data):
    """Supply empty row blocks and infinite bounds for anything left out."""
    if not isinstance(data, dict) or data.get("c") is None:
        return data
    data = dict(data)
    n = np.atleast_1d(np.asarray(data["c"], dtype=float)).size
    for rows, rhs in (("A_ub", "b_ub"), ("A_eq", "b_eq")):
        if data.get(rows) is None or np.asarray(data[rows]).size == 0:
            if data.get(rhs) is not None and np.asarray(data[rhs]).size > 0:
                raise ProblemDimensionError(f"{rhs} given without {rows}.")
            data[rows] = np.zeros((0, n))
            data[rhs] = np.zeros(0)
        elif data.get(rhs) is None:
            raise ProblemDimensionError(f"{rows} given without {rhs}.")
    if data.get("lower") is None:
        data["lower"] = np.full(n, -np.inf)
    if data.get("upper") is None:
        data["upper"] = np.full(n, np.inf)
    return data


def _check_constraint_shapes(model, n: int) -> None:
    for rows, rhs in ((model.A_ub, model.b_ub), (model.A_eq, model.b_eq)):
        if rows.shape != (rhs.size, n):
            raise ProblemDimensionError(
                f"constraint block has shape {rows.shape}, expected ({rhs.size}, {n})."
            )
    if model.lower.size != n or model.upper.size != n:
        raise ProblemDimensionError(f"bounds must have length {n}.")
    if np.any(model.lower > model.upper):
        raise ProblemDimensionError("a lower bound exceeds its upper bound.")
    if np.any(np.isnan(model.lower)) or np.any(np.isnan(model.upper)):
        raise ProblemDimensionError("bounds must not be NaN.")
    if not (np.all(np.isfinite(model.A_ub)) and np.all(np.isfinite(model.b_ub))
            and np.all(np.isfinite(model.A_eq)) and np.all(np.isfinite(model.b_eq))):
        raise ProblemDimensionError("constraint data must be finite.")


class LinearProgram(NumericModel):
    """minimize c'x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lower <= x <= upper."""
    c: Vector
    A_ub: Matrix
    b_ub: Vector
    A_eq: Matrix
    b_eq: Vector
    lower: Vector
    upper: Vector

    @model_validator(mode="before")
    @classmethod
    def _defaults(cls, data):
        return _fill_constraint_defaults(data)

    @model_validator(mode="after")
    def _shapes(self):
        if not np.all(np.isfinite(self.c)):
            raise ProblemDimensionError("objective must be finite.")
        _check_constraint_shapes(self, self.c.size)
        return self

    @property
    def n_vars(self) -> int:
        return self.c.size


class LpSolution(NumericModel):
    """Basic solution of a LinearProgram.

    Multipliers follow the convention c = A_ub' dual_ub + A_eq' dual_eq + bound_duals,
    so dual_ub <= 0 on every "<=" row and dual_ub is a vertex of the dual polyhedron
    when the program has no finite variable bounds.
    """
    status: SolveStatus
    x: Vector | None = None
    dual_ub: Vector | None = None
    dual_eq: Vector | None = None
    bound_duals: Vector | None = None
    objective: float | None = None
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is SolveStatus.OPTIMAL


class QuadraticProgram(NumericModel):
    """minimize 1/2 x'Qx + c'x + constant under the LinearProgram constraint blocks."""
    Q: Matrix
    c: Vector
    A_ub: Matrix
    b_ub: Vector
    A_eq: Matrix
    b_eq: Vector
    lower: Vector
    upper: Vector
    constant: float = 0.0

    @model_validator(mode="before")
    @classmethod
    def _defaults(cls, data):
        return _fill_constraint_defaults(data)

    @model_validator(mode="after")
    def _curvature(self):
        n = self.c.size
        if self.Q.shape != (n, n):
            raise ProblemDimensionError(f"Q has shape {self.Q.shape}, expected ({n}, {n}).")
        _check_constraint_shapes(self, n)
        scale = max(1.0, float(np.max(np.abs(self.Q), initial=0.0)))
        if np.max(np.abs(self.Q - self.Q.T), initial=0.0) > 1e-10 * scale:
            raise NotPositiveDefiniteError("Q must be symmetric.")
        basis = equality_nullspace(self.A_eq)
        if basis.shape[1]:
            reduced = basis.T @ self.Q @ basis
            try:
                np.linalg.cholesky(0.5 * (reduced + reduced.T))
            except np.linalg.LinAlgError as exc:
                raise NotPositiveDefiniteError() from exc
        return self

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.Q @ x + self.c @ x + self.constant)


class QpSolution(NumericModel):
    """Solution of a QuadraticProgram.

    Multipliers satisfy Qx + c = A_eq' dual_eq + A_ub' dual_ub + bound_duals with
    dual_ub <= 0, bound_duals >= 0 at active lower bounds and <= 0 at active upper bounds.
    """
    status: SolveStatus
    x: Vector | None = None
    dual_eq: Vector | None = None
    dual_ub: Vector | None = None
    bound_duals: Vector | None = None
    objective: float | None = None
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is SolveStatus.OPTIMAL


def equality_nullspace(A_eq: np.ndarray) -> np.ndarray:
    """Orthonormal basis of {x | A_eq x = 0}, one column per direction."""
    n = A_eq.shape[1]
    if A_eq.shape[0] == 0:
        return np.eye(n)
    _, singular, vh = np.linalg.svd(A_eq)
    rank = int(np.sum(singular > 1e-10 * max(1.0, singular[0])))
    return vh[rank:].T
