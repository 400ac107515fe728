# mpflex/services/solver.py
"""Dense revised simplex and primal active-set QP.

Both solvers are deterministic: pivot and working-set choices depend only on the
problem data. The simplex uses Dantzig's rule while it makes progress and falls back
to Bland's smallest-index rule for as long as pivots stay degenerate, which rules out
cycling.
"""
import logging

import numpy as np

from mpflex.core.config import settings
from mpflex.core.exceptions import SolverError
from mpflex.models.programs import (
    LinearProgram,
    LpSolution,
    QpSolution,
    QuadraticProgram,
    SolveStatus,
)

logger = logging.getLogger(__name__)

_PIVOT_TOL = 1e-9


class _StandardForm:
    """min cost'z  s.t.  M z = rhs, z >= 0, with x = shift + T z.

    Rows are ordered (A_ub rows, finite upper-bound rows, A_eq rows); every inequality
    row owns a slack column and rows with a negative right-hand side are negated.
    """

    def __init__(self, lp: LinearProgram):
        n = lp.n_vars
        transform: list[np.ndarray] = []
        shift = np.zeros(n)
        widths: list[tuple[int, float]] = []
        for j in range(n):
            lo, hi = lp.lower[j], lp.upper[j]
            unit = np.zeros(n)
            unit[j] = 1.0
            if np.isfinite(lo):
                shift[j] = lo
                if np.isfinite(hi):
                    widths.append((len(transform), hi - lo))
                transform.append(unit)
            elif np.isfinite(hi):
                shift[j] = hi
                transform.append(-unit)
            else:
                transform.append(unit)
                transform.append(-unit)
        self.T = np.array(transform).T if transform else np.zeros((n, 0))
        self.shift = shift
        nz = self.T.shape[1]

        bound_rows = np.zeros((len(widths), nz))
        for row, (col, _) in enumerate(widths):
            bound_rows[row, col] = 1.0
        inequality = np.vstack([lp.A_ub @ self.T, bound_rows])
        inequality_rhs = np.concatenate([lp.b_ub - lp.A_ub @ shift, [w for _, w in widths]])
        self.n_ub = lp.A_ub.shape[0]
        self.n_bound = len(widths)
        self.n_in = inequality.shape[0]
        self.n_eq = lp.A_eq.shape[0]
        self.n_struct = nz

        upper = np.hstack([inequality, np.eye(self.n_in)])
        lower = np.hstack([lp.A_eq @ self.T, np.zeros((self.n_eq, self.n_in))])
        M = np.vstack([upper, lower])
        rhs = np.concatenate([inequality_rhs, lp.b_eq - lp.A_eq @ shift])
        self.sign = np.where(rhs < 0, -1.0, 1.0)
        M = M * self.sign[:, None]
        rhs = rhs * self.sign

        needs_artificial = [i for i in range(M.shape[0]) if i >= self.n_in or self.sign[i] < 0]
        artificial = np.zeros((M.shape[0], len(needs_artificial)))
        for k, row in enumerate(needs_artificial):
            artificial[row, k] = 1.0
        self.M = np.hstack([M, artificial])
        self.rhs = rhs
        self.n_cols = self.M.shape[1]
        self.first_artificial = nz + self.n_in

        basis = []
        lookup = {row: k for k, row in enumerate(needs_artificial)}
        for row in range(M.shape[0]):
            if row in lookup:
                basis.append(self.first_artificial + lookup[row])
            else:
                basis.append(nz + row)
        self.basis = basis
        self.cost = np.concatenate([lp.c @ self.T, np.zeros(self.n_cols - nz)])


class RevisedSimplex:
    """Two-phase revised simplex on a dense LinearProgram."""

    def __init__(self, lp: LinearProgram):
        self.lp = lp
        self.iterations = 0

    def solve(self) -> LpSolution:
        form = _StandardForm(self.lp)
        if form.M.shape[0] == 0:
            return self._solve_unconstrained(form)
        rows = np.arange(form.M.shape[0])
        M, rhs, basis = form.M, form.rhs, list(form.basis)

        if form.first_artificial < form.n_cols:
            phase_one = np.zeros(form.n_cols)
            phase_one[form.first_artificial:] = 1.0
            allowed = np.ones(form.n_cols, dtype=bool)
            status, basis = self._iterate(M, rhs, phase_one, basis, allowed, phase=1)
            values = np.linalg.solve(M[:, basis], rhs)
            residual = float(phase_one[basis] @ values)
            if residual > settings.LP_FEASIBILITY_TOL * (1.0 + np.max(np.abs(rhs), initial=0.0)):
                logger.debug("phase 1 ended with infeasibility %.3e", residual)
                return LpSolution(status=SolveStatus.INFEASIBLE, iterations=self.iterations)
            M, rhs, basis, rows = self._drive_out_artificials(form, M, rhs, basis, rows)

        allowed = np.zeros(M.shape[1], dtype=bool)
        allowed[: form.first_artificial] = True
        cost = form.cost[: M.shape[1]]
        status, basis = self._iterate(M, rhs, cost, basis, allowed, phase=2)
        if status is SolveStatus.UNBOUNDED:
            return LpSolution(status=SolveStatus.UNBOUNDED, iterations=self.iterations)
        return self._extract(form, M, rhs, cost, basis, rows)

    def _solve_unconstrained(self, form) -> LpSolution:
        if np.any(form.cost < -settings.LP_OPTIMALITY_TOL):
            return LpSolution(status=SolveStatus.UNBOUNDED)
        lp = self.lp
        return LpSolution(
            status=SolveStatus.OPTIMAL,
            x=form.shift,
            dual_ub=np.zeros(0),
            dual_eq=np.zeros(0),
            bound_duals=lp.c,
            objective=float(lp.c @ form.shift),
        )

    def _iterate(self, M, rhs, cost, basis, allowed, phase):
        degenerate_run = 0
        scale = max(1.0, float(np.max(np.abs(cost), initial=0.0)))
        in_basis = np.zeros(M.shape[1], dtype=bool)
        in_basis[basis] = True
        while True:
            if self.iterations >= settings.LP_MAX_ITERATIONS:
                raise SolverError(f"simplex exceeded {settings.LP_MAX_ITERATIONS} iterations.")
            B = M[:, basis]
            try:
                values = np.linalg.solve(B, rhs)
                prices = np.linalg.solve(B.T, cost[basis])
            except np.linalg.LinAlgError as exc:
                raise SolverError("basis matrix became singular.") from exc
            values = np.maximum(values, 0.0)
            reduced = cost - prices @ M
            eligible = allowed & ~in_basis & (reduced < -settings.LP_OPTIMALITY_TOL * scale)
            candidates = np.flatnonzero(eligible)
            if candidates.size == 0:
                return SolveStatus.OPTIMAL, basis

            bland = degenerate_run >= settings.LP_DEGENERATE_SWITCH
            entering = int(candidates[0] if bland else candidates[np.argmin(reduced[candidates])])
            direction = np.linalg.solve(B, M[:, entering])
            positive = np.flatnonzero(direction > _PIVOT_TOL)
            if positive.size == 0:
                return SolveStatus.UNBOUNDED, basis
            ratios = values[positive] / direction[positive]
            step = float(ratios.min())
            ties = positive[ratios <= step + settings.LP_FEASIBILITY_TOL]
            leaving = int(min(ties, key=lambda i: basis[i]))

            degenerate_run = degenerate_run + 1 if step <= settings.LP_FEASIBILITY_TOL else 0
            logger.debug(
                "phase %d pivot %d: enter %d leave %d step %.3e objective %.9g rule %s",
                phase, self.iterations, entering, basis[leaving], step,
                float(cost[basis] @ values) + step * float(reduced[entering]),
                "bland" if bland else "dantzig",
            )
            in_basis[basis[leaving]] = False
            in_basis[entering] = True
            basis[leaving] = entering
            self.iterations += 1

    def _drive_out_artificials(self, form, M, rhs, basis, rows):
        """Pivot basic artificials onto structural columns; drop rows that are redundant."""
        keep = np.ones(M.shape[0], dtype=bool)
        for position in range(len(basis)):
            if basis[position] < form.first_artificial:
                continue
            B = M[:, basis]
            unit = np.zeros(M.shape[0])
            unit[position] = 1.0
            row = np.linalg.solve(B.T, unit) @ M[:, : form.first_artificial]
            row[[b for b in basis if b < form.first_artificial]] = 0.0
            if np.max(np.abs(row), initial=0.0) > _PIVOT_TOL:
                basis[position] = int(np.argmax(np.abs(row)))
            else:
                keep[position] = False
        if not keep.all():
            logger.debug("dropping %d redundant equality rows", int((~keep).sum()))
            M = M[keep]
            rhs = rhs[keep]
            basis = [b for b, k in zip(basis, keep) if k]
            rows = rows[keep]
        return M, rhs, basis, rows

    def _extract(self, form, M, rhs, cost, basis, rows) -> LpSolution:
        B = M[:, basis]
        values = np.maximum(np.linalg.solve(B, rhs), 0.0)
        z = np.zeros(M.shape[1])
        z[basis] = values
        x = form.shift + form.T @ z[: form.n_struct]

        prices = np.zeros(form.M.shape[0])
        prices[rows] = np.linalg.solve(B.T, cost[basis])
        prices *= form.sign
        dual_ub = prices[: form.n_ub]
        dual_ub = np.where((dual_ub > 0) & (dual_ub <= settings.LP_FEASIBILITY_TOL), 0.0, dual_ub)
        dual_eq = prices[form.n_in:]
        lp = self.lp
        bound_duals = lp.c - lp.A_ub.T @ dual_ub - lp.A_eq.T @ dual_eq
        return LpSolution(
            status=SolveStatus.OPTIMAL,
            x=x,
            dual_ub=dual_ub,
            dual_eq=dual_eq,
            bound_duals=bound_duals,
            objective=float(lp.c @ x),
            iterations=self.iterations,
        )


def solve_lp(lp: LinearProgram) -> LpSolution:
    """Solve ``lp`` and return a basic optimal primal/dual pair or a status."""
    return RevisedSimplex(lp).solve()


class ActiveSetQP:
    """Primal active-set method for strictly convex QPs.

    Bounds are handled as ordinary inequality rows. The start point is a vertex of the
    feasible set found by the simplex phase 1.
    """

    def __init__(self, qp: QuadraticProgram):
        self.qp = qp
        self.iterations = 0
        upper = np.flatnonzero(np.isfinite(qp.upper))
        lower = np.flatnonzero(np.isfinite(qp.lower))
        n = qp.c.size
        self._upper, self._lower = upper, lower
        self.G = np.vstack([qp.A_ub, np.eye(n)[upper], -np.eye(n)[lower]])
        self.g = np.concatenate([qp.b_ub, qp.upper[upper], -qp.lower[lower]])

    def solve(self) -> QpSolution:
        qp = self.qp
        start = solve_lp(LinearProgram(
            c=np.zeros(qp.c.size), A_ub=qp.A_ub, b_ub=qp.b_ub,
            A_eq=qp.A_eq, b_eq=qp.b_eq, lower=qp.lower, upper=qp.upper,
        ))
        if not start.optimal:
            return QpSolution(status=SolveStatus.INFEASIBLE)

        x = np.array(start.x)
        eq_rows = _independent_rows(qp.A_eq, [], range(qp.A_eq.shape[0]))
        E = qp.A_eq[eq_rows]
        slack = self.g - self.G @ x
        active = [i for i in range(self.G.shape[0]) if slack[i] <= 1e-9 * (1.0 + abs(self.g[i]))]
        working = _independent_rows(self.G, E, active)

        while True:
            if self.iterations >= settings.QP_MAX_ITERATIONS:
                raise SolverError(f"active-set QP exceeded {settings.QP_MAX_ITERATIONS} iterations.")
            self.iterations += 1
            step, lam_eq, lam_in = self._equality_step(x, E, working)
            if np.max(np.abs(step), initial=0.0) <= settings.QP_TOL * (1.0 + np.max(np.abs(x), initial=0.0)):
                if not working or lam_in.min() >= -settings.QP_TOL * (1.0 + np.max(np.abs(lam_in))):
                    break
                dropped = working.pop(int(np.argmin(lam_in)))
                logger.debug("qp iteration %d: release row %d", self.iterations, dropped)
                continue
            growth = self.G @ step
            blocking, alpha = None, 1.0
            for i in range(self.G.shape[0]):
                if i in working or growth[i] <= 1e-12:
                    continue
                ratio = max(0.0, (self.g[i] - self.G[i] @ x) / growth[i])
                if ratio < alpha - 1e-15:
                    blocking, alpha = i, ratio
            x = x + alpha * step
            if blocking is not None:
                logger.debug("qp iteration %d: add row %d at step %.3e", self.iterations, blocking, alpha)
                working.append(blocking)

        return self._solution(x, eq_rows, lam_eq, working, lam_in)

    def _equality_step(self, x, E, working):
        qp = self.qp
        n = x.size
        W = self.G[working] if working else np.zeros((0, n))
        C = np.vstack([E, W])
        k = C.shape[0]
        kkt = np.block([[qp.Q, C.T], [C, np.zeros((k, k))]])
        rhs = np.concatenate([-(qp.Q @ x + qp.c), np.zeros(k)])
        try:
            solution = np.linalg.solve(kkt, rhs)
        except np.linalg.LinAlgError:
            solution = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
        multipliers = solution[n:]
        return solution[:n], multipliers[: E.shape[0]], multipliers[E.shape[0]:]

    def _solution(self, x, eq_rows, lam_eq, working, lam_in) -> QpSolution:
        qp = self.qp
        dual_eq = np.zeros(qp.A_eq.shape[0])
        dual_eq[eq_rows] = -lam_eq
        inequality = np.zeros(self.G.shape[0])
        if working:
            inequality[working] = -np.maximum(lam_in, 0.0)
        m_ub = qp.A_ub.shape[0]
        n_up = self._upper.size
        bound_duals = np.zeros(x.size)
        bound_duals[self._upper] += inequality[m_ub: m_ub + n_up]
        bound_duals[self._lower] -= inequality[m_ub + n_up:]
        return QpSolution(
            status=SolveStatus.OPTIMAL,
            x=x,
            dual_eq=dual_eq,
            dual_ub=inequality[:m_ub],
            bound_duals=bound_duals,
            objective=qp.objective(x),
            iterations=self.iterations,
        )


def _independent_rows(rows: np.ndarray, base, candidates) -> list[int]:
    """Greedy subset of ``candidates`` keeping ``base`` plus the chosen rows full rank."""
    chosen: list[int] = []
    current = np.asarray(base, dtype=float).reshape(-1, rows.shape[1])
    rank = np.linalg.matrix_rank(current) if current.size else 0
    for i in candidates:
        trial = np.vstack([current, rows[i]])
        trial_rank = np.linalg.matrix_rank(trial)
        if trial_rank > rank:
            chosen.append(i)
            current, rank = trial, trial_rank
    return chosen


def solve_qp(qp: QuadraticProgram) -> QpSolution:
    """Solve a strictly convex ``qp``; infeasibility is reported through the status."""
    return ActiveSetQP(qp).solve()
