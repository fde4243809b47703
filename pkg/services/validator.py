import pandas as pd
import numpy as np
from typing import List

from models.schemas import (
    ValidationIssue,
    IssueType,
    IssueSeverity,
)

REQUIRED_COLUMNS = ("t", "f")
MIN_POINTS = 2


def validate_samples(df: pd.DataFrame) -> List[ValidationIssue]:
    """
    Validate a raw `t,f` sample frame (string cells) and return a list of issues.

    Checks:
    1. Missing cells
    2. Non-numeric cells
    3. Non-finite numbers
    4. Duplicate abscissae
    5. Unsorted abscissae
    6. Too few usable points
    """
    issues = []
    issues.extend(check_missing_values(df))
    issues.extend(check_non_numeric(df))
    issues.extend(check_non_finite(df))

    usable = numeric_rows(df)
    issues.extend(check_duplicate_abscissae(usable))
    issues.extend(check_order(usable))

    if len(usable) < MIN_POINTS:
        issues.append(ValidationIssue(
            issue_type=IssueType.TOO_FEW_POINTS,
            severity=IssueSeverity.HIGH,
            description=f"Only {len(usable)} usable rows; at least {MIN_POINTS} are required.",
        ))

    return issues


def numeric_rows(df: pd.DataFrame) -> pd.DataFrame:
    """Rows whose t and f parse as finite numbers."""
    numeric = df[list(REQUIRED_COLUMNS)].apply(pd.to_numeric, errors="coerce")
    finite = np.isfinite(numeric.to_numpy(dtype=float)).all(axis=1)
    return numeric[finite]


def check_missing_values(df: pd.DataFrame) -> List[ValidationIssue]:
    issues = []

    for col in REQUIRED_COLUMNS:
        null_count = int(df[col].isna().sum())
        if null_count > 0:
            null_pct = (null_count / len(df)) * 100
            null_rows = df[df[col].isna()].index.tolist()[:10]

            if null_pct > 50:
                severity = IssueSeverity.HIGH
            elif null_pct > 20:
                severity = IssueSeverity.MEDIUM
            else:
                severity = IssueSeverity.LOW

            issues.append(ValidationIssue(
                row_number=int(null_rows[0]),
                column_name=col,
                issue_type=IssueType.MISSING_VALUE,
                severity=severity,
                description=f"Column '{col}' has {null_count} missing values ({null_pct:.1f}%); "
                            f"those rows are skipped. Affected rows (first 10): {null_rows}",
            ))

    return issues


def check_non_numeric(df: pd.DataFrame) -> List[ValidationIssue]:
    issues = []

    for col in REQUIRED_COLUMNS:
        present = df[col].notna()
        parsed = pd.to_numeric(df[col], errors="coerce")
        bad = present & parsed.isna()
        if bad.any():
            rows = df.index[bad].tolist()[:10]
            samples = df.loc[bad, col].head(3).tolist()
            issues.append(ValidationIssue(
                row_number=int(rows[0]),
                column_name=col,
                issue_type=IssueType.NON_NUMERIC,
                severity=IssueSeverity.HIGH,
                description=f"Column '{col}' has {int(bad.sum())} non-numeric cells, e.g. {samples}. "
                            f"Rows (first 10): {rows}",
            ))

    return issues


def check_non_finite(df: pd.DataFrame) -> List[ValidationIssue]:
    issues = []

    for col in REQUIRED_COLUMNS:
        parsed = pd.to_numeric(df[col], errors="coerce")
        bad = np.isinf(parsed.to_numpy(dtype=float))
        if bad.any():
            rows = df.index[bad].tolist()[:10]
            issues.append(ValidationIssue(
                row_number=int(rows[0]),
                column_name=col,
                issue_type=IssueType.NON_FINITE,
                severity=IssueSeverity.HIGH,
                description=f"Column '{col}' has {int(bad.sum())} infinite values. Rows (first 10): {rows}",
            ))

    return issues


def check_duplicate_abscissae(usable: pd.DataFrame) -> List[ValidationIssue]:
    issues = []

    duplicate_mask = usable["t"].duplicated(keep="first")
    duplicate_count = int(duplicate_mask.sum())
    if duplicate_count > 0:
        rows = usable.index[duplicate_mask].tolist()[:20]
        issues.append(ValidationIssue(
            row_number=int(rows[0]),
            column_name="t",
            issue_type=IssueType.DUPLICATE_ABSCISSA,
            severity=IssueSeverity.HIGH,
            description=f"Found {duplicate_count} repeated abscissae. Rows (first 20): {rows}",
        ))

    return issues


def check_order(usable: pd.DataFrame) -> List[ValidationIssue]:
    t = usable["t"].to_numpy(dtype=float)
    if t.size > 1 and np.any(np.diff(t) < 0):
        first = int(np.flatnonzero(np.diff(t) < 0)[0]) + 1
        return [ValidationIssue(
            row_number=int(usable.index[first]),
            column_name="t",
            issue_type=IssueType.UNSORTED,
            severity=IssueSeverity.LOW,
            description="Abscissae are not in increasing order; the samples are sorted by t.",
        )]
    return []


def blocking_issues(issues: List[ValidationIssue]) -> List[ValidationIssue]:
    return [issue for issue in issues if issue.severity == IssueSeverity.HIGH]
