from .schemas import (
    FreeKnotError,
    BenchmarkId,
    SplineKind,
    ProblemKind,
    Relation,
    MilpStatus,
    LpStatus,
    Branching,
    Winner,
    AuditStatus,
    CertificateBranch,
    OptimizerKind,
    IssueType,
    IssueSeverity,
    ValidationIssue,
    Grid,
    SampledFunction,
    AffinePiece,
    OneKnotSpline,
    LinearSpline,
    DeviationProfile,
    LpBasis,
    LpProblem,
    LpSolution,
    InequalityFit,
    MilpModel,
    MilpSolution,
    BnbOptions,
    BigMAudit,
    AlternationReport,
    OptimalityVerdict,
    SolveReport,
    ReluNet1,
    TrainConfig,
    TrainHistory,
    TrainResult,
    RunConfig,
)
