"""
Linear programming core: a dense revised primal simplex with bounded variables.

Rows are brought to equality form with one slack per row (bounded according to the
row's relation). Phase 1 minimises the sum of artificial variables added only for
rows whose slack cannot absorb the initial residual; phase 2 minimises the real
objective. Pricing is Dantzig's rule, switching to Bland's rule after a long run of
degenerate pivots.
"""
import json
import logging
import math
from typing import Optional, Tuple

import numpy as np

from models.schemas import FreeKnotError, InequalityFit, LpBasis, LpProblem, LpSolution, LpStatus, Relation

logger = logging.getLogger(__name__)
stats_logger = logging.getLogger("services.lp.stats")

OPTIMALITY_TOL = 1e-9
FEASIBILITY_TOL = 1e-9
PIVOT_TOL = 1e-11
DEGENERATE_STEP = 1e-12
REFACTOR_EVERY = 100
MAX_ITERATIONS = 200_000
DEGENERATE_FACTOR = 50

# nonbasic / basic column states
AT_LOWER = 0
AT_UPPER = 1
AT_ZERO = 2
BASIC = 3


class LpError(FreeKnotError):
    """Raised when the simplex cannot finish (iteration limit, bad input)."""
    pass


class NumericError(LpError):
    """Raised when the basis becomes numerically singular and refactorisation does not help."""
    pass


def _slack_bounds(relations) -> Tuple[np.ndarray, np.ndarray]:
    lower = np.empty(len(relations))
    upper = np.empty(len(relations))
    for i, rel in enumerate(relations):
        if rel == Relation.LE:
            lower[i], upper[i] = 0.0, math.inf
        elif rel == Relation.GE:
            lower[i], upper[i] = -math.inf, 0.0
        else:
            lower[i], upper[i] = 0.0, 0.0
    return lower, upper


class _Simplex:
    """Workspace of a single solve. Never shared between threads."""

    def __init__(self, problem: LpProblem):
        m, n = problem.num_rows, problem.num_cols
        self.m, self.n = m, n
        A = np.asarray(problem.A, dtype=float).reshape(m, n)
        slack_lower, slack_upper = _slack_bounds(problem.relations)
        self.A = np.hstack([A, np.eye(m)])
        self.lower = np.concatenate([problem.lower, slack_lower])
        self.upper = np.concatenate([problem.upper, slack_upper])
        self.cost = np.concatenate([problem.c, np.zeros(m)])
        self.b = np.array(problem.b, dtype=float)
        self.num_real = n + m
        self.scale = 1.0 + float(np.max(np.abs(self.b), initial=0.0))

        self.iterations = 0
        self.degenerate_run = 0
        self.since_refactor = 0
        self.bland = False

    # --- starting bases -------------------------------------------------------

    def _nonbasic_defaults(self):
        lo_f = np.isfinite(self.lower)
        up_f = np.isfinite(self.upper)
        self.x = np.where(lo_f, self.lower, np.where(up_f, self.upper, 0.0))
        self.status = np.where(lo_f, AT_LOWER, np.where(up_f, AT_UPPER, AT_ZERO)).astype(np.int8)

    def cold_start(self) -> bool:
        """Slack basis where possible, artificials elsewhere. Returns True if artificials were needed."""
        m, n = self.m, self.n
        self._nonbasic_defaults()
        residual = self.b - self.A[:, :n] @ self.x[:n]
        basis = np.empty(m, dtype=np.int64)
        binv_diag = np.ones(m)
        art_rows, art_signs, art_values = [], [], []
        for i in range(m):
            j = n + i
            v = residual[i]
            if self.lower[j] <= v <= self.upper[j]:
                self.x[j] = v
                self.status[j] = BASIC
                basis[i] = j
                continue
            s = min(max(v, self.lower[j]), self.upper[j])
            self.x[j] = s
            self.status[j] = AT_LOWER if s == self.lower[j] else AT_UPPER
            rem = v - s
            basis[i] = self.num_real + len(art_rows)
            art_rows.append(i)
            art_signs.append(1.0 if rem > 0 else -1.0)
            art_values.append(abs(rem))
            binv_diag[i] = art_signs[-1]

        k = len(art_rows)
        if k:
            E = np.zeros((m, k))
            E[art_rows, np.arange(k)] = art_signs
            self.A = np.hstack([self.A, E])
            self.lower = np.concatenate([self.lower, np.zeros(k)])
            self.upper = np.concatenate([self.upper, np.full(k, math.inf)])
            self.cost = np.concatenate([self.cost, np.zeros(k)])
            self.x = np.concatenate([self.x, np.array(art_values)])
            self.status = np.concatenate([self.status, np.full(k, BASIC, dtype=np.int8)])
        self.basis = basis
        self.Binv = np.diag(binv_diag)
        return k > 0

    def warm_start(self, warm: LpBasis) -> bool:
        """Install a previous basis. Returns False if it is unusable or primal infeasible."""
        basic = np.asarray(warm.basic, dtype=np.int64)
        if basic.size != self.m or len(set(warm.basic)) != self.m:
            return False
        if basic.size and (basic.min() < 0 or basic.max() >= self.num_real):
            return False
        self._nonbasic_defaults()
        for j in warm.at_upper:
            if 0 <= j < self.num_real and np.isfinite(self.upper[j]):
                self.x[j] = self.upper[j]
                self.status[j] = AT_UPPER
        self.status[basic] = BASIC
        self.basis = basic.copy()
        try:
            self._refactor()
        except NumericError:
            return False
        xb = self.x[self.basis]
        tol = 1e-9 * self.scale
        ok = np.all(xb >= self.lower[self.basis] - tol) and np.all(xb <= self.upper[self.basis] + tol)
        return bool(ok)

    # --- linear algebra ---------------------------------------------------------

    def _refactor(self):
        B = self.A[:, self.basis]
        if self.m == 0:
            self.Binv = np.zeros((0, 0))
            self.since_refactor = 0
            return
        try:
            Binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as e:
            raise NumericError(f"singular basis after {self.iterations} pivots") from e
        if not np.all(np.isfinite(Binv)):
            raise NumericError(f"non-finite basis inverse after {self.iterations} pivots")
        self.Binv = Binv
        xn = self.x.copy()
        xn[self.basis] = 0.0
        self.x[self.basis] = Binv @ (self.b - self.A @ xn)
        self.since_refactor = 0

    def _entering(self, d: np.ndarray) -> int:
        nonbasic = self.status != BASIC
        movable = self.upper > self.lower
        can_rise = (self.status == AT_LOWER) | (self.status == AT_ZERO)
        can_fall = (self.status == AT_UPPER) | (self.status == AT_ZERO)
        cand = nonbasic & movable & ((can_rise & (d < -OPTIMALITY_TOL)) | (can_fall & (d > OPTIMALITY_TOL)))
        if not cand.any():
            return -1
        if self.bland:
            return int(np.flatnonzero(cand)[0])
        return int(np.argmax(np.where(cand, np.abs(d), -1.0)))

    def _ratio_test(self, delta: np.ndarray) -> Tuple[float, int]:
        xb = self.x[self.basis]
        lb = self.lower[self.basis]
        ub = self.upper[self.basis]
        theta = np.full(self.m, math.inf)
        falling = (delta > PIVOT_TOL) & np.isfinite(lb)
        rising = (delta < -PIVOT_TOL) & np.isfinite(ub)
        theta[falling] = (xb[falling] - lb[falling]) / delta[falling]
        theta[rising] = (ub[rising] - xb[rising]) / (-delta[rising])
        np.maximum(theta, 0.0, out=theta)
        step = float(theta.min(initial=math.inf))
        if not math.isfinite(step):
            return step, -1
        ties = np.flatnonzero(theta <= step * (1.0 + 1e-12) + 1e-15)
        if self.bland:
            r = int(ties[np.argmin(self.basis[ties])])
        else:
            r = int(ties[np.argmax(np.abs(delta[ties]))])
        return step, r

    # --- main loop -----------------------------------------------------------

    def run(self, cost: np.ndarray) -> bool:
        """Iterate to optimality for ``cost``. Returns False when unbounded."""
        guard = DEGENERATE_FACTOR * (self.m + self.n)
        while True:
            if self.since_refactor >= REFACTOR_EVERY:
                self._refactor()
            pi = cost[self.basis] @ self.Binv
            d = cost - pi @ self.A
            j = self._entering(d)
            if j < 0:
                return True
            if self.iterations >= MAX_ITERATIONS:
                raise LpError(f"iteration limit {MAX_ITERATIONS} reached")

            direction = 1.0 if d[j] < 0 else -1.0
            alpha = self.Binv @ self.A[:, j]
            delta = direction * alpha
            step, r = self._ratio_test(delta)
            span = self.upper[j] - self.lower[j] if self.status[j] != AT_ZERO else math.inf

            if not math.isfinite(step) and not math.isfinite(span):
                return False

            if span <= step:
                # bound flip, basis unchanged
                self.x[self.basis] -= span * delta
                if self.status[j] == AT_LOWER:
                    self.x[j], self.status[j] = self.upper[j], AT_UPPER
                else:
                    self.x[j], self.status[j] = self.lower[j], AT_LOWER
                taken = span
            else:
                self._pivot(j, r, step, direction, alpha, delta)
                taken = step

            self.iterations += 1
            if taken <= DEGENERATE_STEP:
                self.degenerate_run += 1
                if not self.bland and self.degenerate_run > guard:
                    logger.debug(f"{self.degenerate_run} degenerate pivots, switching to Bland's rule")
                    self.bland = True
            else:
                self.degenerate_run = 0

    def _pivot(self, j: int, r: int, step: float, direction: float, alpha: np.ndarray, delta: np.ndarray):
        piv = alpha[r]
        if abs(piv) < PIVOT_TOL:
            self._refactor()
            alpha = self.Binv @ self.A[:, j]
            piv = alpha[r]
            if abs(piv) < PIVOT_TOL:
                raise NumericError(f"pivot {piv:.3e} below tolerance at iteration {self.iterations}")
        leaving = self.basis[r]
        to_upper = delta[r] < 0
        self.x[self.basis] -= step * delta
        self.x[j] += direction * step
        self.x[leaving] = self.upper[leaving] if to_upper else self.lower[leaving]
        self.status[leaving] = AT_UPPER if to_upper else AT_LOWER
        self.status[j] = BASIC
        self.basis[r] = j

        row_r = self.Binv[r] / piv
        self.Binv -= np.outer(alpha, row_r)
        self.Binv[r] = row_r
        self.since_refactor += 1

    def primal_residual(self) -> float:
        return float(np.max(np.abs(self.A @ self.x - self.b), initial=0.0))


def lp_solve(problem: LpProblem, warm_basis: Optional[LpBasis] = None) -> LpSolution:
    """Solve ``problem`` to a certified status."""
    sx = _Simplex(problem)
    n, m = sx.n, sx.m

    warm = warm_basis is not None and sx.warm_start(warm_basis)
    if not warm:
        if warm_basis is not None:
            logger.debug("Warm basis rejected, starting from the slack basis")
            sx = _Simplex(problem)
        if sx.cold_start():
            phase1 = np.zeros_like(sx.cost)
            phase1[sx.num_real:] = 1.0
            sx.run(phase1)
            sx._refactor()
            infeasibility = float(np.sum(sx.x[sx.num_real:]))
            if infeasibility > 1e-8 * sx.scale:
                _log_stats(sx, "infeasible")
                return LpSolution(status=LpStatus.INFEASIBLE, iterations=sx.iterations)
            sx.upper[sx.num_real:] = 0.0
            sx.x[sx.num_real:] = np.where(sx.status[sx.num_real:] == BASIC, sx.x[sx.num_real:], 0.0)
            sx.cost[sx.num_real:] = 0.0

    for attempt in range(2):
        if not sx.run(sx.cost):
            _log_stats(sx, "unbounded")
            return LpSolution(status=LpStatus.UNBOUNDED, iterations=sx.iterations)
        sx._refactor()
        if sx.primal_residual() <= 1e-7 * sx.scale:
            break
        logger.debug(f"Primal residual {sx.primal_residual():.3e} after refactorisation, continuing")
    else:
        raise NumericError(f"primal residual {sx.primal_residual():.3e} persists after refactorisation")

    # pricing once more on the fresh factorisation
    if sx._entering(sx.cost - (sx.cost[sx.basis] @ sx.Binv) @ sx.A) >= 0:
        if not sx.run(sx.cost):
            return LpSolution(status=LpStatus.UNBOUNDED, iterations=sx.iterations)
        sx._refactor()

    pi = sx.cost[sx.basis] @ sx.Binv
    d = sx.cost - pi @ sx.A
    x = sx.x[:n].copy()
    basis = None
    if np.all(sx.basis < sx.num_real):
        at_upper = np.flatnonzero(sx.status[: sx.num_real] == AT_UPPER)
        basis = LpBasis(basic=tuple(int(j) for j in sx.basis), at_upper=tuple(int(j) for j in at_upper))

    _log_stats(sx, "optimal")
    return LpSolution(
        status=LpStatus.OPTIMAL,
        objective_value=float(problem.c @ x),
        x=x,
        basis=basis,
        dual_values=pi,
        reduced_costs=d[:n].copy(),
        iterations=sx.iterations,
    )


def dual_bound(problem: LpProblem, solution: LpSolution) -> float:
    """Dual objective of the bounded LP at the returned multipliers.

    Equals the primal objective at an optimum; any gap measures the KKT residual.
    """
    pi = solution.dual_values
    d = solution.reduced_costs
    slack_lower, slack_upper = _slack_bounds(problem.relations)
    all_d = np.concatenate([d, -pi])
    lower = np.concatenate([problem.lower, slack_lower])
    upper = np.concatenate([problem.upper, slack_upper])
    total = float(pi @ problem.b)
    for dj, lo, up in zip(all_d, lower, upper):
        if abs(dj) <= OPTIMALITY_TOL:
            continue
        bound = lo if dj > 0 else up
        if not math.isfinite(bound):
            return -math.inf
        total += dj * bound
    return total


def _log_stats(sx: _Simplex, outcome: str):
    if stats_logger.isEnabledFor(logging.DEBUG):
        stats_logger.debug(json.dumps({
            "outcome": outcome,
            "rows": sx.m,
            "cols": sx.n,
            "artificials": int(sx.A.shape[1] - sx.num_real),
            "iterations": sx.iterations,
            "bland": sx.bland,
        }))


def solve_inequality_form(
    G: np.ndarray,
    h: np.ndarray,
    c: np.ndarray,
    warm_basis: Optional[LpBasis] = None,
) -> InequalityFit:
    """
    Solve min c.x s.t. G x <= h with x free through the equality-form dual

        min h.y  s.t.  G^T y = -c,  y >= 0

    whose row count is the (small) number of unknowns. The primal point is the
    multiplier vector of that dual and the primal optimum is minus its objective.
    """
    G = np.asarray(G, dtype=float)
    h = np.asarray(h, dtype=float)
    c = np.asarray(c, dtype=float)
    k, n = G.shape
    dual = LpProblem(
        c=h,
        A=G.T,
        b=-c,
        relations=(Relation.EQ,) * n,
        lower=np.zeros(k),
        upper=np.full(k, math.inf),
    )
    sol = lp_solve(dual, warm_basis=warm_basis)
    if sol.status == LpStatus.UNBOUNDED:
        return InequalityFit(status=LpStatus.INFEASIBLE, iterations=sol.iterations)
    if sol.status == LpStatus.INFEASIBLE:
        return InequalityFit(status=LpStatus.UNBOUNDED, iterations=sol.iterations)
    x = np.array(sol.dual_values, dtype=float)
    return InequalityFit(
        status=LpStatus.OPTIMAL,
        objective_value=float(c @ x),
        x=x,
        multipliers=sol.x,
        iterations=sol.iterations,
    )
