"""
Branch and bound for the big-M one-knot models, the two-model driver, and the
split-enumeration oracle.

Node relaxations are solved in the space of (a1, b1, a2, b2, dev) only: the per-point
value and binary columns of a model are projected out exactly, which leaves one LP
with five unknowns and a handful of rows per point. A node fixes the active piece of
some points (1 or 2) and leaves the others free (0).
"""
import heapq
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from models.schemas import (
    AffinePiece,
    AuditStatus,
    BigMAudit,
    BnbOptions,
    Branching,
    FreeKnotError,
    LpStatus,
    MilpModel,
    MilpSolution,
    MilpStatus,
    OneKnotSpline,
    ProblemKind,
    SampledFunction,
    SolveReport,
    SplineKind,
    Winner,
)
from services.cheb import TAU_ALT, best_line, check_sufficient
from services.lp import solve_inequality_form
from services.milp import (
    active_from_binaries,
    assemble_point,
    audit_big_m,
    build_max_model,
    build_min_model,
    default_big_m,
    spline_kind,
    spline_of_solution,
    variable_bounds,
)
from services.spline import deviation, make_one_knot

logger = logging.getLogger(__name__)

FREE = 0
INTEGRALITY_TOL = 1e-9
POLISH_RTOL = 1e-9
SINGLE_RTOL = 1e-7
FEASIBILITY_RTOL = 1e-6

# (l1, l2, dev, M, f) coefficients of the projected rows, written for the max model;
# the min model uses the same rows with l and f negated
_PIECE1_ROWS = ((1, 0, -1, 0, 1), (-1, 0, -1, 0, -1), (-1, 1, 0, 0, 0), (1, -1, 0, 1, 0))
_PIECE2_ROWS = ((0, 1, -1, 0, 1), (0, -1, -1, 0, -1), (1, -1, 0, 0, 0), (-1, 1, 0, 1, 0))
_FREE_ROWS = (
    (1, 0, -1, 0, 1),
    (0, 1, -1, 0, 1),
    (1, -1, 0, 1, 0),
    (-1, 1, 0, 1, 0),
    (-1, 0, -1, 1, -1),
    (0, -1, -1, 1, -1),
    (-1, -1, -2, 1, -2),
)
_TEMPLATES = {1: _PIECE1_ROWS, 2: _PIECE2_ROWS, FREE: _FREE_ROWS}


class InternalError(FreeKnotError):
    """Raised when a relaxation that must be solvable is not."""
    pass


@dataclass(frozen=True)
class Relaxation:
    """Static data of the projected node LPs of one model."""
    t: np.ndarray
    f: np.ndarray
    sign: float
    big_m: float
    slope_bound: float
    intercept_bound: float

    @classmethod
    def of(cls, data: SampledFunction, kind: ProblemKind, big_m: float) -> "Relaxation":
        slope, intercept = variable_bounds(data)
        sign = 1.0 if kind == ProblemKind.MAX_PROBLEM else -1.0
        return cls(np.asarray(data.t), np.asarray(data.f), sign, float(big_m), slope, intercept)

    def rows(self, active: np.ndarray, dev_cols: Tuple[int, int, int] = (4, 4, 4), width: int = 5):
        """G, h for an active-piece pattern. dev_cols picks the error column per code (free, 1, 2)."""
        blocks_G, blocks_h = [], []
        s, M = self.sign, self.big_m
        for code in (1, 2, FREE):
            mask = active == code
            if not mask.any():
                continue
            T, F = self.t[mask], self.f[mask]
            ones = np.ones(T.size)
            dev_col = dev_cols[code]
            for alpha, beta, gamma, m_coef, f_coef in _TEMPLATES[code]:
                G = np.zeros((T.size, width))
                G[:, 0], G[:, 1] = s * alpha * T, s * alpha
                G[:, 2], G[:, 3] = s * beta * T, s * beta
                G[:, dev_col] = gamma * ones
                blocks_G.append(G)
                blocks_h.append(m_coef * M + f_coef * s * F)
        box_G = np.zeros((8, width))
        for k in range(4):
            box_G[2 * k, k], box_G[2 * k + 1, k] = 1.0, -1.0
        bound = [self.slope_bound, self.intercept_bound] * 2
        blocks_G.append(box_G)
        blocks_h.append(np.repeat(bound, 2))
        return np.vstack(blocks_G), np.concatenate(blocks_h)

    def solve(self, active: np.ndarray):
        G, h = self.rows(active)
        nonneg = np.zeros((1, 5))
        nonneg[0, 4] = -1.0
        fit = solve_inequality_form(np.vstack([G, nonneg]), np.append(h, 0.0), np.array([0.0, 0.0, 0.0, 0.0, 1.0]))
        if fit.status != LpStatus.OPTIMAL:
            raise InternalError(f"node relaxation ended {fit.status.value}")
        return fit

    def pieces(self, x: np.ndarray) -> Tuple[AffinePiece, AffinePiece]:
        return (AffinePiece(slope=float(x[0]), intercept=float(x[1])),
                AffinePiece(slope=float(x[2]), intercept=float(x[3])))

    def spline_values(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Spline values at the points and the active piece (1 on ties)."""
        l1 = x[0] * self.t + x[1]
        l2 = x[2] * self.t + x[3]
        if self.sign > 0:
            return np.maximum(l1, l2), np.where(l1 >= l2, 1, 2).astype(np.int8)
        return np.minimum(l1, l2), np.where(l1 <= l2, 1, 2).astype(np.int8)

    def piece2_weight(self, x: np.ndarray) -> np.ndarray:
        """Relaxed weight of piece 2 at each point (0 or 1 when integral)."""
        s = self.sign
        L1 = s * (x[0] * self.t + x[1])
        L2 = s * (x[2] * self.t + x[3])
        value = np.maximum(np.maximum(L1, L2), s * self.f - x[4])
        tol = INTEGRALITY_TOL * (1.0 + np.abs(value))
        w = np.clip((value - L1) / self.big_m, 0.0, 1.0)
        w = np.where(value - L1 <= tol, 0.0, np.where(value - L2 <= tol, 1.0, w))
        return w


@dataclass
class _Node:
    depth: int
    lo: int = 0
    hi: int = 0
    first: int = 1
    fixed: Optional[np.ndarray] = None


@dataclass
class _NodeResult:
    bound: float
    x: np.ndarray
    iterations: int
    solved: bool = True


@dataclass(order=True)
class _Entry:
    bound: float
    neg_depth: int
    seq: int
    node: _Node = field(compare=False)


class BranchAndBound:
    """Best-bound search over active-piece patterns of one model."""

    def __init__(self, model: MilpModel, opts: BnbOptions):
        self.model = model
        self.opts = opts
        self.relax = Relaxation.of(model.data, model.kind, model.big_m)
        self.n = model.data.size
        self.nodes = 0
        self.pivots = 0
        self.seq = 0
        self.trace: List[float] = []
        self._span_cache: Dict[Tuple[int, int], _NodeResult] = {}

        # constant fit: both pieces equal the midrange
        f = self.relax.f
        mid = 0.5 * (float(f.max()) + float(f.min()))
        self.best_value = math.inf
        self.best_x = np.array([0.0, mid, 0.0, mid, 0.0])
        self._offer(self.best_x)

    # --- incumbent -----------------------------------------------------------

    def _offer(self, x: np.ndarray):
        values, _ = self.relax.spline_values(x)
        dev = float(np.max(np.abs(self.relax.f - values)))
        if dev < self.best_value:
            self.best_value = dev
            self.best_x = np.array(x[:4].tolist() + [dev])
            self.trace.append(dev)
            logger.debug(f"{self.model.kind.value}: incumbent {dev:.9g} at node {self.nodes}")

    # --- nodes ------------------------------------------------------------------

    def _active(self, node: _Node) -> np.ndarray:
        if node.fixed is not None:
            return node.fixed
        active = np.zeros(self.n, dtype=np.int8)
        active[:node.lo] = node.first
        active[node.hi:] = 3 - node.first
        return active

    def _solve(self, active: np.ndarray) -> _NodeResult:
        fit = self.relax.solve(active)
        return _NodeResult(fit.objective_value, fit.x, fit.iterations)

    def _evaluate_batch(self, batch: List[_Entry], pool: Optional[ThreadPoolExecutor]) -> List[_NodeResult]:
        """Relaxations of a batch of nodes, in batch order.

        A crossover span with piece 2 first is the mirror image of the same span with
        piece 1 first, so each span is solved once with piece 1 first.
        """
        keys: List[object] = []
        jobs: Dict[object, np.ndarray] = {}
        for entry in batch:
            node = entry.node
            if node.fixed is None:
                key = (node.lo, node.hi)
                if key not in self._span_cache and key not in jobs:
                    jobs[key] = self._active(_Node(node.depth, node.lo, node.hi, 1))
            else:
                key = ("fixed", entry.seq)
                jobs[key] = node.fixed
            keys.append(key)

        order = list(jobs)
        if pool is not None and len(order) > 1:
            solved = list(pool.map(self._solve, [jobs[k] for k in order]))
        else:
            solved = [self._solve(jobs[k]) for k in order]
        fresh = dict(zip(order, solved))

        results = []
        for entry, key in zip(batch, keys):
            node = entry.node
            if node.fixed is not None:
                results.append(fresh[key])
                continue
            if key in fresh:
                base = fresh.pop(key)
                self._span_cache[key] = base
            else:
                cached = self._span_cache[key]
                base = _NodeResult(cached.bound, cached.x, 0, solved=False)
            if node.first == 2:
                x = base.x
                base = _NodeResult(base.bound, np.array([x[2], x[3], x[0], x[1], x[4]]), base.iterations, base.solved)
            results.append(base)
        return results

    def _children(self, node: _Node, result: _NodeResult) -> List[_Node]:
        if node.fixed is None:
            if node.lo == node.hi:
                return []
            mid = (node.lo + node.hi) // 2
            return [_Node(node.depth + 1, node.lo, mid, node.first),
                    _Node(node.depth + 1, mid + 1, node.hi, node.first)]

        free = np.flatnonzero(node.fixed == FREE)
        if free.size == 0:
            return []
        w = self.relax.piece2_weight(result.x)[free]
        frac = np.minimum(w, 1.0 - w)
        k = int(np.argmax(frac))
        if frac[k] <= INTEGRALITY_TOL:
            return []
        i = int(free[k])
        children = []
        for code in (1, 2):
            fixed = node.fixed.copy()
            fixed[i] = code
            children.append(_Node(node.depth + 1, fixed=fixed))
        return children

    def _push(self, heap: list, bound: float, node: _Node):
        self.seq += 1
        heapq.heappush(heap, _Entry(bound, -node.depth, self.seq, node))

    # --- search ---------------------------------------------------------------

    def run(self) -> MilpSolution:
        opts = self.opts
        start = time.perf_counter()
        heap: List[_Entry] = []
        if opts.branching == Branching.CROSSOVER_DICHOTOMY:
            for first in (1, 2):
                self._push(heap, -math.inf, _Node(0, 0, self.n, first))
        else:
            self._push(heap, -math.inf, _Node(0, fixed=np.zeros(self.n, dtype=np.int8)))

        status = MilpStatus.OPTIMAL
        pool = ThreadPoolExecutor(max_workers=opts.workers) if opts.workers > 1 else None
        try:
            while heap:
                if self.nodes >= opts.node_limit:
                    status = MilpStatus.NODE_LIMIT
                    break
                if time.perf_counter() - start > opts.time_limit:
                    status = MilpStatus.TIME_LIMIT
                    break

                batch: List[_Entry] = []
                room = min(opts.workers, opts.node_limit - self.nodes)
                while heap and len(batch) < room:
                    entry = heapq.heappop(heap)
                    if entry.bound >= self.best_value - opts.abs_gap:
                        continue
                    batch.append(entry)
                if not batch:
                    break

                results = self._evaluate_batch(batch, pool)
                for entry, result in zip(batch, results):
                    self.nodes += 1
                    self.pivots += result.iterations
                    self._offer(result.x)
                    if result.bound >= self.best_value - opts.abs_gap:
                        continue
                    for child in self._children(entry.node, result):
                        self._push(heap, result.bound, child)
        finally:
            if pool is not None:
                pool.shutdown()

        open_bounds = [e.bound for e in heap if e.bound < self.best_value]
        lower = min(open_bounds) if (open_bounds and status != MilpStatus.OPTIMAL) else self.best_value
        gap = max(0.0, self.best_value - lower) if math.isfinite(lower) else math.inf
        elapsed = time.perf_counter() - start
        if status != MilpStatus.OPTIMAL:
            logger.warning(f"{self.model.kind.value}: stopped on {status.value} after {self.nodes} nodes, gap {gap:.3g}")
        logger.info(f"{self.model.data.label} {self.model.kind.value}: objective {self.best_value:.9g}, "
                    f"{self.nodes} nodes, {self.pivots} pivots, {elapsed:.2f}s")
        return self._solution(status, gap, elapsed)

    def _solution(self, status: MilpStatus, gap: float, elapsed: float) -> MilpSolution:
        pieces = self.relax.pieces(self.best_x)
        _, active = self.relax.spline_values(self.best_x)
        x = assemble_point(self.model, pieces, active)
        scale = 1.0 + self.model.big_m + float(np.abs(self.relax.f).max())
        violation = self.model.max_violation(x)
        if violation > FEASIBILITY_RTOL * scale:
            raise InternalError(f"incumbent violates the model by {violation:.3e}")
        return MilpSolution(
            objective_value=float(x[4]),
            continuous_values=x[:self.model.num_continuous],
            binary_values=x[self.model.num_continuous:],
            status=status,
            gap=gap,
            nodes=self.nodes,
            lp_pivots=self.pivots,
            wall_time=elapsed,
            incumbent_trace=tuple(self.trace),
        )


def solve_milp(model: MilpModel, opts: Optional[BnbOptions] = None) -> MilpSolution:
    return BranchAndBound(model, opts or BnbOptions()).run()


# --- driver ------------------------------------------------------------------------

BUILDERS = {
    ProblemKind.MAX_PROBLEM: build_max_model,
    ProblemKind.MIN_PROBLEM: build_min_model,
}


def _solve_audited(data: SampledFunction, kind: ProblemKind, M: float, opts: BnbOptions, warnings: List[str]):
    model = BUILDERS[kind](data, M)
    sol = solve_milp(model, opts)
    audit = audit_big_m(model, sol)
    logger.info(f"{data.label} {kind.value}: big-M audit {audit.status.value} "
                f"(worst slack {audit.worst_slack:.4g} of M={M:g})")
    if audit.status == AuditStatus.FAIL:
        message = (f"{kind.value}: big-M row within {100 * 1e-3:g}% of binding "
                   f"(slack {audit.worst_slack:.6g}, M={M:g}); re-solving with M={2 * M:g}")
        logger.warning(message)
        warnings.append(message)
        model2 = BUILDERS[kind](data, 2 * M)
        sol2 = solve_milp(model2, opts)
        change = abs(sol2.objective_value - sol.objective_value)
        if change >= 1e-6:
            warnings.append(f"{kind.value}: doubling M changed the objective by {change:.3g}")
        audit = BigMAudit(status=AuditStatus.FAIL, big_m=M, worst_slack=audit.worst_slack,
                          resolved_objective=sol2.objective_value)
        model, sol = model2, sol2
    return model, sol, audit


def _winner(z_max: float, z_min: float, gap: float) -> Winner:
    if abs(z_max - z_min) <= gap:
        return Winner.TIE
    return Winner.MAX_PROBLEM if z_max < z_min else Winner.MIN_PROBLEM


def _polish(data: SampledFunction, kind: ProblemKind, M: float, active: np.ndarray,
            z_star: float) -> Optional[OneKnotSpline]:
    """
    Re-fit both pieces on a fixed split, each capped at z_star, minimising their error sum.

    When several optimal splines tie, the one returned is the LP vertex the simplex
    reaches (Dantzig pricing, lowest index on ties). A side that equioscillates at
    z_star has no line below z_star on its points, so it stays at z_star and keeps
    its alternation; only a non-binding side is lowered.
    """
    if not ((active == 1).any() and (active == 2).any()):
        return None
    relax = Relaxation.of(data, kind, M)
    # columns a1, b1, a2, b2, e1, e2
    G, h = relax.rows(active, dev_cols=(4, 4, 5), width=6)
    cap = z_star + POLISH_RTOL * (1.0 + z_star)
    extra = np.array([
        [0, 0, 0, 0, 1.0, 0],
        [0, 0, 0, 0, 0, 1.0],
        [0, 0, 0, 0, -1.0, 0],
        [0, 0, 0, 0, 0, -1.0],
    ])
    G = np.vstack([G, extra])
    h = np.concatenate([h, [cap, cap, 0.0, 0.0]])
    fit = solve_inequality_form(G, h, np.array([0, 0, 0, 0, 1.0, 1.0]))
    if fit.status != LpStatus.OPTIMAL:
        logger.debug(f"polish LP ended {fit.status.value}; keeping the branch-and-bound pieces")
        return None
    p1 = AffinePiece(slope=float(fit.x[0]), intercept=float(fit.x[1]))
    p2 = AffinePiece(slope=float(fit.x[2]), intercept=float(fit.x[3]))
    return make_one_knot(p1, p2, spline_kind(kind), data.interval)


def finalize_spline(data: SampledFunction, kind: ProblemKind, M: float, spline: OneKnotSpline,
                    active: np.ndarray, polish: bool = True) -> Tuple[OneKnotSpline, bool]:
    """Canonical form of an optimal spline: polished pieces, or the best line if it ties."""
    z_star = deviation(spline, data).sup
    polished = False
    if polish and spline.kind != SplineKind.SINGLE:
        candidate = _polish(data, kind, M, active, z_star)
        if candidate is not None and deviation(candidate, data).sup <= z_star + SINGLE_RTOL * (1.0 + z_star):
            spline, polished = candidate, True
            z_star = deviation(spline, data).sup

    line, line_dev = best_line(data)
    if line_dev <= z_star + SINGLE_RTOL * (1.0 + z_star):
        spline = make_one_knot(line, line, SplineKind.SINGLE, data.interval)
    return spline, polished


def _report(data: SampledFunction, runs: dict, opts: BnbOptions, start: float,
            warnings: List[str], tau: float) -> SolveReport:
    z = {kind: run[1].objective_value for kind, run in runs.items()}
    winner = _winner(z[ProblemKind.MAX_PROBLEM], z[ProblemKind.MIN_PROBLEM], opts.abs_gap)
    best_kind = ProblemKind.MIN_PROBLEM if winner == Winner.MIN_PROBLEM else ProblemKind.MAX_PROBLEM
    model, sol, _ = runs[best_kind]

    active = active_from_binaries(model.kind, sol.binary_values)
    spline, polished = finalize_spline(data, best_kind, model.big_m, spline_of_solution(model, sol),
                                       active, polish=opts.polish)
    objective = deviation(spline, data).sup

    statuses = [run[1].status for run in runs.values()]
    status = next((s for s in statuses if s != MilpStatus.OPTIMAL), MilpStatus.OPTIMAL)
    audits = {kind.value: run[2] for kind, run in runs.items()}
    audit_status = AuditStatus.FAIL if any(a.status == AuditStatus.FAIL for a in audits.values()) else AuditStatus.PASS

    return SolveReport(
        label=data.label,
        best_spline=spline,
        objective=objective,
        winner=winner,
        status=status,
        gap=max(run[1].gap for run in runs.values()),
        max_objective=z[ProblemKind.MAX_PROBLEM],
        min_objective=z[ProblemKind.MIN_PROBLEM],
        big_m={kind.value: run[0].big_m for kind, run in runs.items()},
        nodes=sum(run[1].nodes for run in runs.values()),
        lp_pivots=sum(run[1].lp_pivots for run in runs.values()),
        wall_time=time.perf_counter() - start,
        bigM_audit=audit_status,
        audits=audits,
        polished=polished,
        certificate=check_sufficient(data, spline, tau),
        warnings=warnings,
    )


def solve_one_knot(data: SampledFunction, opts: Optional[BnbOptions] = None, tau: float = TAU_ALT) -> SolveReport:
    """Solve the max and the min model and keep the smaller optimum."""
    opts = opts or BnbOptions()
    start = time.perf_counter()
    M = opts.M_override or default_big_m(data)
    logger.info(f"Solving {data.label} on {data.size} points with M={M:g}")
    warnings: List[str] = []
    runs = {kind: _solve_audited(data, kind, M, opts, warnings) for kind in BUILDERS}
    report = _report(data, runs, opts, start, warnings, tau)
    logger.info(f"{data.label}: deviation {report.objective:.6g}, {report.winner.value}, "
                f"{report.best_spline.kind.value}, certificate {report.certificate.branch.value}")
    return report


def oracle_enumerate(data: SampledFunction, opts: Optional[BnbOptions] = None, tau: float = TAU_ALT) -> SolveReport:
    """Enumerate every crossover index, orientation and model; one LP each."""
    opts = opts or BnbOptions()
    start = time.perf_counter()
    M = opts.M_override or default_big_m(data)
    n = data.size
    runs = {}
    for kind, builder in BUILDERS.items():
        relax = Relaxation.of(data, kind, M)
        best_value, best_x, lps, pivots = math.inf, None, 0, 0
        kind_start = time.perf_counter()
        for first in (1, 2):
            for k in range(n + 1):
                active = np.full(n, 3 - first, dtype=np.int8)
                active[:k] = first
                fit = relax.solve(active)
                lps += 1
                pivots += fit.iterations
                if fit.objective_value < best_value:
                    best_value, best_x = fit.objective_value, fit.x
        model = builder(data, M)
        pieces = relax.pieces(best_x)
        _, active = relax.spline_values(best_x)
        x = assemble_point(model, pieces, active)
        sol = MilpSolution(
            objective_value=float(x[4]),
            continuous_values=x[:model.num_continuous],
            binary_values=x[model.num_continuous:],
            status=MilpStatus.OPTIMAL,
            nodes=lps,
            lp_pivots=pivots,
            wall_time=time.perf_counter() - kind_start,
        )
        runs[kind] = (model, sol, audit_big_m(model, sol))
        logger.info(f"{data.label} {kind.value} oracle: {sol.objective_value:.9g} over {lps} splits")
    return _report(data, runs, opts, start, [], tau)
