import math
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_serializer, field_validator, model_validator


class FreeKnotError(Exception):
    """Base class for errors raised by the solver services."""
    pass


def _readonly_array(value, dtype=float) -> np.ndarray:
    arr = np.array(value, dtype=dtype)
    arr.setflags(write=False)
    return arr


class BenchmarkId(str, Enum):
    F1 = "f1"
    F2 = "f2"
    F3 = "f3"
    F4 = "f4"
    F5 = "f5"


class SplineKind(str, Enum):
    MAX_OF_TWO = "max"
    MIN_OF_TWO = "min"
    SINGLE = "single"


class ProblemKind(str, Enum):
    MAX_PROBLEM = "max_problem"
    MIN_PROBLEM = "min_problem"


class Relation(str, Enum):
    LE = "<="
    EQ = "="
    GE = ">="


class MilpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    NODE_LIMIT = "node_limit"
    TIME_LIMIT = "time_limit"


class LpStatus(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


class Branching(str, Enum):
    CROSSOVER_DICHOTOMY = "crossover"
    MOST_FRACTIONAL = "most_fractional"


class Winner(str, Enum):
    MAX_PROBLEM = "max_problem"
    MIN_PROBLEM = "min_problem"
    TIE = "tie"


class AuditStatus(str, Enum):
    PASS = "pass"
    FAIL = "fail"


class CertificateBranch(str, Enum):
    TWO_PIECES_3_AND_3 = "two_pieces_3_and_3"
    SINGLE_PIECE_4 = "single_piece_4"
    NOT_MET = "not_met"


class OptimizerKind(str, Enum):
    ADAM = "adam"
    ADAMAX = "adamax"


class IssueType(str, Enum):
    MISSING_VALUE = "missing_value"
    NON_NUMERIC = "non_numeric"
    NON_FINITE = "non_finite"
    DUPLICATE_ABSCISSA = "duplicate_abscissa"
    UNSORTED = "unsorted"
    TOO_FEW_POINTS = "too_few_points"


class IssueSeverity(str, Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


class ValidationIssue(BaseModel):
    row_number: Optional[int] = None
    column_name: Optional[str] = None
    issue_type: IssueType
    severity: IssueSeverity
    description: str


# --- sampled data -----------------------------------------------------------

class Grid(BaseModel):
    """Ordered abscissae t_1..t_N spanning [c, d].

    Grids from make_grid are uniform with step h; grids read from CSV files may be
    non-uniform, in which case ``uniform`` is False and ``h`` is the mean step.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    c: float
    d: float
    h: float
    points: np.ndarray
    uniform: bool = True

    @field_validator("points", mode="before")
    @classmethod
    def _as_array(cls, value):
        return _readonly_array(value)

    @field_serializer("points")
    def _points_to_list(self, value: np.ndarray):
        return value.tolist()

    @model_validator(mode="after")
    def _check_invariants(self):
        pts = self.points
        if pts.ndim != 1 or pts.size < 2:
            raise ValueError("a grid needs at least two points")
        if not (math.isfinite(self.c) and math.isfinite(self.d) and self.c < self.d):
            raise ValueError(f"invalid interval [{self.c}, {self.d}]")
        if not (self.h > 0):
            raise ValueError(f"step must be positive, got {self.h}")
        if pts[0] != self.c or pts[-1] != self.d:
            raise ValueError("grid must start at c and end at d")
        steps = np.diff(pts)
        if np.any(steps <= 0):
            raise ValueError("grid points must be strictly increasing")
        if self.uniform and steps.size > 1:
            tol = 1e-12 * max(1.0, abs(self.h))
            if np.any(np.abs(steps[:-1] - self.h) > tol):
                raise ValueError("grid flagged uniform but interior steps differ from h")
        return self

    @property
    def size(self) -> int:
        return int(self.points.size)


class SampledFunction(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    grid: Grid
    values: np.ndarray
    label: str = ""

    @field_validator("values", mode="before")
    @classmethod
    def _as_array(cls, value):
        return _readonly_array(value)

    @field_serializer("values")
    def _values_to_list(self, value: np.ndarray):
        return value.tolist()

    @model_validator(mode="after")
    def _check_invariants(self):
        if self.values.shape != self.grid.points.shape:
            raise ValueError(
                f"{self.values.size} values for {self.grid.size} grid points"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("sampled values must be finite")
        return self

    @property
    def t(self) -> np.ndarray:
        return self.grid.points

    @property
    def f(self) -> np.ndarray:
        return self.values

    @property
    def size(self) -> int:
        return self.grid.size

    @property
    def interval(self) -> Tuple[float, float]:
        return (self.grid.c, self.grid.d)


# --- splines ----------------------------------------------------------------

class AffinePiece(BaseModel):
    model_config = ConfigDict(frozen=True)

    slope: float
    intercept: float

    @model_validator(mode="after")
    def _check_finite(self):
        if not (math.isfinite(self.slope) and math.isfinite(self.intercept)):
            raise ValueError("affine piece coefficients must be finite")
        return self

    def __call__(self, t):
        return self.slope * t + self.intercept


class OneKnotSpline(BaseModel):
    """max / min of two affine pieces, or a single piece.

    A Single spline stores its piece as both piece1 and piece2. Build through
    ``services.spline.make_one_knot`` which does the classification.
    """
    model_config = ConfigDict(frozen=True)

    piece1: AffinePiece
    piece2: AffinePiece
    kind: SplineKind
    knot: Optional[float] = None
    interval: Tuple[float, float]

    @model_validator(mode="after")
    def _check_knot(self):
        c, d = self.interval
        if not c < d:
            raise ValueError(f"invalid interval [{c}, {d}]")
        if self.kind == SplineKind.SINGLE:
            if self.knot is not None:
                raise ValueError("a single piece has no knot")
        elif self.knot is None or not (c <= self.knot <= d):
            raise ValueError(f"knot {self.knot} must lie in [{c}, {d}]")
        return self


class LinearSpline(BaseModel):
    """Truncated-power form s(t) = a_0 + sum_i a_i max(0, t - knots[i-1])."""
    model_config = ConfigDict(frozen=True)

    a: Tuple[float, ...]
    knots: Tuple[float, ...]

    @model_validator(mode="after")
    def _check_shape(self):
        if len(self.a) < 2 or len(self.a) != len(self.knots):
            raise ValueError("need a_0..a_n and knots theta_0..theta_n with n >= 1")
        if any(not math.isfinite(v) for v in self.a + self.knots):
            raise ValueError("spline coefficients and knots must be finite")
        if any(k1 > k2 for k1, k2 in zip(self.knots, self.knots[1:])):
            raise ValueError("knots must be ordered")
        if self.knots[0] >= self.knots[-1]:
            raise ValueError("external knots must satisfy c < d")
        return self

    @property
    def interval(self) -> Tuple[float, float]:
        return (self.knots[0], self.knots[-1])


class DeviationProfile(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    residuals: np.ndarray
    sup: float
    argmax_indices: Tuple[int, ...]

    @field_validator("residuals", mode="before")
    @classmethod
    def _as_array(cls, value):
        return _readonly_array(value)


# --- linear and mixed-integer programs ----------------------------------------

class LpBasis(BaseModel):
    """Basic columns (structural then slack numbering) and nonbasic columns at upper bound."""
    model_config = ConfigDict(frozen=True)

    basic: Tuple[int, ...]
    at_upper: Tuple[int, ...] = ()


class LpProblem(BaseModel):
    """minimize c.x  s.t.  A x (rel) b,  lower <= x <= upper."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    relations: Tuple[Relation, ...]
    lower: np.ndarray
    upper: np.ndarray

    @field_validator("c", "b", "lower", "upper", mode="before")
    @classmethod
    def _as_vector(cls, value):
        return _readonly_array(np.atleast_1d(np.asarray(value, dtype=float)))

    @field_validator("A", mode="before")
    @classmethod
    def _as_matrix(cls, value):
        return _readonly_array(np.atleast_2d(np.asarray(value, dtype=float)))

    @model_validator(mode="after")
    def _check_dimensions(self):
        n = self.c.size
        m = self.b.size
        if self.A.shape != (m, n) and not (m == 0 and self.A.size == 0):
            raise ValueError(f"A has shape {self.A.shape}, expected {(m, n)}")
        if len(self.relations) != m:
            raise ValueError("one relation per row required")
        if self.lower.size != n or self.upper.size != n:
            raise ValueError("one bound pair per variable required")
        if np.isnan(self.A).any() or np.isnan(self.b).any() or np.isnan(self.c).any():
            raise ValueError("NaN coefficient in LP")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound above upper bound")
        return self

    @property
    def num_rows(self) -> int:
        return int(self.b.size)

    @property
    def num_cols(self) -> int:
        return int(self.c.size)


class LpSolution(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    status: LpStatus
    objective_value: float = math.nan
    x: Optional[np.ndarray] = None
    basis: Optional[LpBasis] = None
    dual_values: Optional[np.ndarray] = None
    reduced_costs: Optional[np.ndarray] = None
    iterations: int = 0


class InequalityFit(BaseModel):
    """Solution of min c.x s.t. G x <= h with x free, recovered through its dual."""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    status: LpStatus
    objective_value: float = math.nan
    x: Optional[np.ndarray] = None
    multipliers: Optional[np.ndarray] = None
    iterations: int = 0


class MilpModel(BaseModel):
    """One of the two big-M models, stored as a CSR constraint matrix.

    Columns are a1, b1, a2, b2, the deviation scalar (z or y), the per-point values
    (c_i or d_i) and the per-point binaries (z_i or y_i). ``var_index`` maps the roles
    "a1", "b1", "a2", "b2", "dev", "value" and "binary" to their first column. Every row
    is stored as ``<=``; ``relations`` keeps the relation of each row for export.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    kind: ProblemKind
    big_m: float
    data: SampledFunction
    var_names: Tuple[str, ...]
    var_index: Dict[str, int]
    num_continuous: int
    num_binary: int
    objective: Tuple[Tuple[int, float], ...]
    indptr: np.ndarray
    indices: np.ndarray
    coefficients: np.ndarray
    relations: Tuple[Relation, ...]
    rhs: np.ndarray
    row_names: Tuple[str, ...]
    lower: np.ndarray
    upper: np.ndarray
    slope_bound: float
    intercept_bound: float

    @field_validator("indptr", "indices", mode="before")
    @classmethod
    def _as_index_array(cls, value):
        return _readonly_array(value, dtype=np.int64)

    @field_validator("coefficients", "rhs", "lower", "upper", mode="before")
    @classmethod
    def _as_array(cls, value):
        return _readonly_array(value)

    @model_validator(mode="after")
    def _check_structure(self):
        if not self.big_m > 0:
            raise ValueError("big-M must be positive")
        nvars = self.num_continuous + self.num_binary
        if len(self.var_names) != nvars:
            raise ValueError("one name per column required")
        if self.indices.size and (self.indices.min() < 0 or self.indices.max() >= nvars):
            raise ValueError("constraint row references an undefined column")
        if not np.all(np.isfinite(self.rhs)):
            raise ValueError("right-hand sides must be finite")
        return self

    @property
    def num_vars(self) -> int:
        return self.num_continuous + self.num_binary

    @property
    def num_rows(self) -> int:
        return int(self.rhs.size)

    def row(self, i: int) -> Tuple[np.ndarray, np.ndarray, Relation, float]:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return self.indices[lo:hi], self.coefficients[lo:hi], self.relations[i], float(self.rhs[i])

    def activity(self, x: np.ndarray) -> np.ndarray:
        products = self.coefficients * np.asarray(x, dtype=float)[self.indices]
        return np.add.reduceat(products, self.indptr[:-1])

    def max_violation(self, x: np.ndarray) -> float:
        """Largest violation of any row or variable bound at ``x``."""
        x = np.asarray(x, dtype=float)
        rows = np.max(self.activity(x) - self.rhs, initial=0.0)
        bounds = max(np.max(self.lower - x, initial=0.0), np.max(x - self.upper, initial=0.0))
        return float(max(rows, bounds, 0.0))


class MilpSolution(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    objective_value: float
    continuous_values: np.ndarray
    binary_values: np.ndarray
    status: MilpStatus
    gap: float = 0.0
    nodes: int = 0
    lp_pivots: int = 0
    wall_time: float = 0.0
    incumbent_trace: Tuple[float, ...] = ()

    @field_validator("continuous_values", mode="before")
    @classmethod
    def _as_array(cls, value):
        return _readonly_array(value)

    @field_validator("binary_values", mode="before")
    @classmethod
    def _as_int_array(cls, value):
        return _readonly_array(value, dtype=np.int8)


class BnbOptions(BaseModel):
    model_config = ConfigDict(frozen=True)

    abs_gap: float = Field(default=1e-7, gt=0)
    node_limit: int = Field(default=10**6, gt=0)
    time_limit: float = Field(default=1800.0, gt=0)
    branching: Branching = Branching.CROSSOVER_DICHOTOMY
    M_override: Optional[float] = Field(default=None, gt=0)
    workers: int = Field(default=1, ge=1)
    polish: bool = True


class BigMAudit(BaseModel):
    model_config = ConfigDict(frozen=True)

    status: AuditStatus
    big_m: float
    worst_slack: float
    resolved_objective: Optional[float] = None


# --- certificates -------------------------------------------------------------

class AlternationReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    tolerance: float
    sup: float
    extreme_indices: Tuple[int, ...]
    longest_alternating: int
    sequence_indices: Tuple[int, ...]
    per_subinterval: Optional[Tuple[int, int]] = None
    subinterval_levels: Optional[Tuple[float, float]] = None
    subinterval_sequences: Optional[Tuple[Tuple[int, ...], Tuple[int, ...]]] = None
    shared_knot_indices: Tuple[int, ...] = ()


class OptimalityVerdict(BaseModel):
    model_config = ConfigDict(frozen=True)

    sufficient_met: bool
    branch: CertificateBranch
    details: AlternationReport
    notes: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_consistency(self):
        if self.sufficient_met != (self.branch != CertificateBranch.NOT_MET):
            raise ValueError("sufficient_met must agree with the branch")
        return self


class SolveReport(BaseModel):
    label: str = ""
    best_spline: OneKnotSpline
    objective: float
    winner: Winner
    status: MilpStatus = MilpStatus.OPTIMAL
    gap: float = 0.0
    max_objective: Optional[float] = None
    min_objective: Optional[float] = None
    big_m: Dict[str, float] = Field(default_factory=dict)
    nodes: int = 0
    lp_pivots: int = 0
    wall_time: float = 0.0
    bigM_audit: AuditStatus = AuditStatus.PASS
    audits: Dict[str, BigMAudit] = Field(default_factory=dict)
    polished: bool = False
    certificate: Optional[OptimalityVerdict] = None
    warnings: List[str] = Field(default_factory=list)


# --- neural -------------------------------------------------------------------

class ReluNet1(BaseModel):
    model_config = ConfigDict(frozen=True)

    w1: Tuple[float, ...]
    b1: Tuple[float, ...]
    w2: Tuple[float, ...]
    b2: float

    @model_validator(mode="after")
    def _check_shape(self):
        n = len(self.w1)
        if n < 1 or len(self.b1) != n or len(self.w2) != n:
            raise ValueError("w1, b1 and w2 need equal length n >= 1")
        if any(not math.isfinite(v) for v in self.w1 + self.b1 + self.w2 + (self.b2,)):
            raise ValueError("network weights must be finite")
        return self

    @property
    def hidden(self) -> int:
        return len(self.w1)


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    epochs: int = Field(default=50, ge=0)
    learning_rate: float = Field(default=0.05, gt=0)
    beta1: float = Field(default=0.9, gt=0, lt=1)
    beta2: float = Field(default=0.999, gt=0, lt=1)
    epsilon: float = Field(default=1e-8, gt=0)
    seed: int = 0
    optimizer: OptimizerKind = OptimizerKind.ADAM
    hidden: int = Field(default=1, ge=1)


class TrainHistory(BaseModel):
    loss_per_epoch: List[float]
    final_loss: float
    wall_time: float = 0.0

    @property
    def best_so_far(self) -> List[float]:
        return np.minimum.accumulate(np.asarray(self.loss_per_epoch, dtype=float)).tolist()


class TrainResult(BaseModel):
    """One optimizer run as shown in the comparison table."""
    optimizer: OptimizerKind
    net: ReluNet1
    history: TrainHistory
    knots: List[float]
    deviation: float
    refined_knot: Optional[float] = None
    refined_deviation: Optional[float] = None


# --- command configuration ------------------------------------------------------

class RunConfig(BaseModel):
    """Merged settings for one command: defaults, then config file, then flags."""
    command: str
    fn: Optional[BenchmarkId] = None
    csv: Optional[str] = None
    c: float = -1.0
    d: float = 1.0
    h: float = 1e-3
    big_m: Optional[float] = None
    abs_gap: float = 1e-7
    node_limit: int = 10**6
    time_limit: float = 1800.0
    branching: Branching = Branching.CROSSOVER_DICHOTOMY
    workers: int = 1
    oracle: bool = False
    epochs: Optional[int] = None
    seed: int = 0
    learning_rate: float = 0.05
    hidden: int = 1
    spline: Optional[str] = None
    tau: float = 1e-6
    output_dir: str = "out"
    emit_table: bool = False
    emit_samples: bool = False
    export_lp: Optional[ProblemKind] = None
    figure: bool = True
    train: bool = False

    @model_validator(mode="after")
    def _check_sources(self):
        if self.fn is not None and self.csv is not None:
            raise ValueError("--fn and --csv are mutually exclusive")
        if not self.c < self.d:
            raise ValueError(f"invalid interval [{self.c}, {self.d}]")
        if not self.h > 0:
            raise ValueError("--h must be positive")
        if not 0 <= self.tau < 0.5:
            raise ValueError("--tau must lie in [0, 0.5)")
        return self
