"""
Big-M mixed-integer models of the one-knot Chebyshev problem.

The maximum model writes the spline as c_i = max(l1(t_i), l2(t_i)), the minimum model
as d_i = min(l1(t_i), l2(t_i)), with l_k(t) = a_k t + b_k. Per point there are six
rows in the fixed order dev+, dev-, def1, def2, bigM1, bigM2, all stored as "<=".
"""
import logging
import math
from typing import Optional, Tuple

import numpy as np

from models.schemas import (
    AffinePiece,
    AuditStatus,
    BigMAudit,
    FreeKnotError,
    LpProblem,
    MilpModel,
    MilpSolution,
    MilpStatus,
    OneKnotSpline,
    ProblemKind,
    Relation,
    SampledFunction,
    SplineKind,
)
from services.spline import make_one_knot

logger = logging.getLogger(__name__)

SLOPE_FACTOR = 4.0
BOX_FACTOR = 10.0
AUDIT_MARGIN = 1e-3
ROWS_PER_POINT = 6
ROW_TAGS = ("dev_plus", "dev_minus", "def1", "def2", "bigm1", "bigm2")

A1, B1, A2, B2, DEV = 0, 1, 2, 3, 4


class ModelError(FreeKnotError):
    """Raised for invalid model parameters or unusable solutions."""
    pass


def data_range(data: SampledFunction) -> float:
    return float(data.f.max() - data.f.min())


def variable_bounds(data: SampledFunction) -> Tuple[float, float]:
    """Box (slope bound, intercept bound) for a1, a2 and b1, b2."""
    c, d = data.interval
    slope = max(1.0, BOX_FACTOR * SLOPE_FACTOR * data_range(data) / (d - c))
    intercept = BOX_FACTOR * (float(np.abs(data.f).max()) + slope * max(abs(c), abs(d)))
    return slope, max(intercept, 1.0)


def default_big_m(data: SampledFunction) -> float:
    if data.size == 0:
        raise ModelError("no data points")
    c, d = data.interval
    spread = data_range(data)
    slope_cap = SLOPE_FACTOR * spread / (d - c)
    return max(1.0, BOX_FACTOR * (spread + slope_cap * (d - c)))


def _build(data: SampledFunction, M: float, kind: ProblemKind) -> MilpModel:
    if not (M > 0 and math.isfinite(M)):
        raise ModelError(f"big-M must be positive and finite, got {M}")
    n = data.size
    if n == 0:
        raise ModelError("no data points")
    t = np.asarray(data.t, dtype=float)
    f = np.asarray(data.f, dtype=float)
    idx = np.arange(n)
    val = 5 + idx
    binc = 5 + n + idx
    ones = np.ones(n)
    zeros = np.zeros(n)

    def cols(*columns):
        return np.column_stack([np.broadcast_to(np.asarray(c_), (n,)) for c_ in columns])

    # s = +1 for the max model, -1 for the min model: definition rows of the min
    # model are the max rows with the pieces and the value negated
    s = 1.0 if kind == ProblemKind.MAX_PROBLEM else -1.0
    if kind == ProblemKind.MAX_PROBLEM:
        big1 = (cols(A1, B1, val, binc), cols(-t, -ones, ones, -M * ones), zeros)
        big2 = (cols(A2, B2, val, binc), cols(-t, -ones, ones, M * ones), M * ones)
    else:
        big1 = (cols(A1, B1, val, binc), cols(t, ones, -ones, M * ones), M * ones)
        big2 = (cols(A2, B2, val, binc), cols(t, ones, -ones, -M * ones), zeros)
    blocks = [
        (cols(val, DEV), cols(-ones, -ones), -f),
        (cols(val, DEV), cols(ones, -ones), f),
        (cols(A1, B1, val), cols(s * t, s * ones, -s * ones), zeros),
        (cols(A2, B2, val), cols(s * t, s * ones, -s * ones), zeros),
        big1,
        big2,
    ]

    indices = np.hstack([b[0] for b in blocks]).astype(np.int64).ravel()
    coefficients = np.hstack([b[1] for b in blocks]).astype(float).ravel()
    rhs = np.column_stack([b[2] for b in blocks]).ravel()
    widths = [b[0].shape[1] for b in blocks]
    per_point = np.concatenate([[0], np.cumsum(widths)])
    indptr = (np.arange(n)[:, None] * per_point[-1] + per_point[:-1]).ravel()
    indptr = np.append(indptr, n * per_point[-1])

    if kind == ProblemKind.MAX_PROBLEM:
        dev_name, value_name = "z", "c"
    else:
        dev_name, value_name = "y", "d"
    var_names = (
        ("a1", "b1", "a2", "b2", dev_name)
        + tuple(f"{value_name}_{i + 1}" for i in range(n))
        + tuple(f"{dev_name}_{i + 1}" for i in range(n))
    )
    row_names = tuple(f"{tag}_{i + 1}" for i in range(n) for tag in ROW_TAGS)

    slope, intercept = variable_bounds(data)
    lower = np.concatenate([[-slope, -intercept, -slope, -intercept, 0.0], np.full(n, -math.inf), np.zeros(n)])
    upper = np.concatenate([[slope, intercept, slope, intercept, math.inf], np.full(n, math.inf), np.ones(n)])

    model = MilpModel(
        kind=kind,
        big_m=float(M),
        data=data,
        var_names=var_names,
        var_index={"a1": A1, "b1": B1, "a2": A2, "b2": B2, "dev": DEV, "value": 5, "binary": 5 + n},
        num_continuous=n + 5,
        num_binary=n,
        objective=((DEV, 1.0),),
        indptr=indptr,
        indices=indices,
        coefficients=coefficients,
        relations=(Relation.LE,) * (ROWS_PER_POINT * n),
        rhs=rhs,
        row_names=row_names,
        lower=lower,
        upper=upper,
        slope_bound=slope,
        intercept_bound=intercept,
    )
    logger.debug(f"Built {kind.value} for {data.label}: {model.num_vars} columns, {model.num_rows} rows, M={M:g}")
    return model


def build_max_model(data: SampledFunction, M: float) -> MilpModel:
    return _build(data, M, ProblemKind.MAX_PROBLEM)


def build_min_model(data: SampledFunction, M: float) -> MilpModel:
    return _build(data, M, ProblemKind.MIN_PROBLEM)


def spline_kind(kind: ProblemKind) -> SplineKind:
    return SplineKind.MAX_OF_TWO if kind == ProblemKind.MAX_PROBLEM else SplineKind.MIN_OF_TWO


def binaries_from_active(kind: ProblemKind, active: np.ndarray) -> np.ndarray:
    """Binary values for an active-piece pattern (1 or 2 per point)."""
    active = np.asarray(active)
    if kind == ProblemKind.MAX_PROBLEM:
        return (active == 2).astype(np.int8)
    return (active == 1).astype(np.int8)


def active_from_binaries(kind: ProblemKind, binaries: np.ndarray) -> np.ndarray:
    binaries = np.asarray(binaries)
    if kind == ProblemKind.MAX_PROBLEM:
        return np.where(binaries >= 0.5, 2, 1).astype(np.int8)
    return np.where(binaries >= 0.5, 1, 2).astype(np.int8)


def pieces_of(model: MilpModel, x: np.ndarray) -> Tuple[AffinePiece, AffinePiece]:
    return (AffinePiece(slope=float(x[A1]), intercept=float(x[B1])),
            AffinePiece(slope=float(x[A2]), intercept=float(x[B2])))


def assemble_point(model: MilpModel, pieces: Tuple[AffinePiece, AffinePiece], active: np.ndarray) -> np.ndarray:
    """Full MILP vector for two pieces and an active-piece pattern."""
    t = model.data.t
    l1, l2 = pieces[0](t), pieces[1](t)
    values = np.maximum(l1, l2) if model.kind == ProblemKind.MAX_PROBLEM else np.minimum(l1, l2)
    dev = float(np.max(np.abs(model.data.f - values)))
    head = [pieces[0].slope, pieces[0].intercept, pieces[1].slope, pieces[1].intercept, dev]
    return np.concatenate([head, values, binaries_from_active(model.kind, active)])


def solution_to_spline(model: MilpModel, sol: MilpSolution) -> OneKnotSpline:
    if sol.status != MilpStatus.OPTIMAL:
        raise ModelError(f"solution status is {sol.status.value}, not optimal")
    return spline_of_solution(model, sol)


def spline_of_solution(model: MilpModel, sol: MilpSolution) -> OneKnotSpline:
    """Spline encoded by any (possibly limit-terminated) incumbent."""
    p1, p2 = pieces_of(model, sol.continuous_values)
    return make_one_knot(p1, p2, spline_kind(model.kind), model.data.interval)


def audit_big_m(model: MilpModel, sol: MilpSolution) -> BigMAudit:
    """Slack of the inactive piece's big-M row at every point against M."""
    x = sol.continuous_values
    t = model.data.t
    l1 = x[A1] * t + x[B1]
    l2 = x[A2] * t + x[B2]
    values = x[5:5 + model.data.size]
    active = active_from_binaries(model.kind, sol.binary_values)
    inactive = np.where(active == 1, l2, l1)
    if model.kind == ProblemKind.MAX_PROBLEM:
        slack = values - inactive
    else:
        slack = inactive - values
    worst = float(slack.max())
    status = AuditStatus.PASS if worst < (1.0 - AUDIT_MARGIN) * model.big_m else AuditStatus.FAIL
    return BigMAudit(status=status, big_m=model.big_m, worst_slack=worst)


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def _linear(names, coefs) -> str:
    parts = []
    for name, coef in zip(names, coefs):
        if coef == 0:
            continue
        sign = "-" if coef < 0 else "+"
        if not parts:
            parts.append(f"{'-' if coef < 0 else ''}{_fmt(abs(coef))} {name}")
        else:
            parts.append(f"{sign} {_fmt(abs(coef))} {name}")
    return " ".join(parts) if parts else f"0 {names[0]}"


def to_lp_format(model: MilpModel) -> str:
    """The model in CPLEX LP text format."""
    names = model.var_names
    lines = [f"\\ {model.kind.value} for {model.data.label or 'data'}, M = {_fmt(model.big_m)}", "Minimize"]
    lines.append(" obj: " + _linear([names[j] for j, _ in model.objective], [c for _, c in model.objective]))
    lines.append("Subject To")
    for i in range(model.num_rows):
        cols, coefs, rel, rhs = model.row(i)
        lines.append(f" {model.row_names[i]}: {_linear([names[j] for j in cols], coefs)} {rel.value} {_fmt(rhs)}")
    lines.append("Bounds")
    for j in range(model.num_continuous):
        lo, up = model.lower[j], model.upper[j]
        if math.isinf(lo) and math.isinf(up):
            lines.append(f" {names[j]} free")
        elif math.isinf(up):
            lines.append(f" {names[j]} >= {_fmt(lo)}")
        else:
            lines.append(f" {_fmt(lo)} <= {names[j]} <= {_fmt(up)}")
    lines.append("Binaries")
    first = model.num_continuous
    for k in range(0, model.num_binary, 10):
        lines.append(" " + " ".join(names[first + k:first + min(k + 10, model.num_binary)]))
    lines.append("End")
    return "\n".join(lines) + "\n"


def lp_relaxation(model: MilpModel, fixed_binaries: Optional[np.ndarray] = None) -> LpProblem:
    """The full model as a dense LP: binaries relaxed to [0, 1], or fixed to given values."""
    A = np.zeros((model.num_rows, model.num_vars))
    rows = np.repeat(np.arange(model.num_rows), np.diff(model.indptr))
    np.add.at(A, (rows, model.indices), model.coefficients)
    c = np.zeros(model.num_vars)
    for j, coef in model.objective:
        c[j] += coef
    lower = np.array(model.lower, dtype=float)
    upper = np.array(model.upper, dtype=float)
    if fixed_binaries is not None:
        fixed = np.asarray(fixed_binaries, dtype=float)
        if fixed.shape != (model.num_binary,):
            raise ModelError(f"{fixed.size} fixed values for {model.num_binary} binaries")
        lower[model.num_continuous:] = fixed
        upper[model.num_continuous:] = fixed
    return LpProblem(c=c, A=A, b=model.rhs, relations=model.relations, lower=lower, upper=upper)
