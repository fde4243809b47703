import pandas as pd

from models.schemas import IssueSeverity, IssueType
from services.validator import blocking_issues, numeric_rows, validate_samples


def _frame(t, f) -> pd.DataFrame:
    return pd.DataFrame({"t": t, "f": f}, dtype=object)


def _types(issues):
    return {issue.issue_type for issue in issues}


class TestValidateSamples:
    def test_clean_frame(self):
        assert validate_samples(_frame(["0", "0.5", "1"], ["1", "2", "3"])) == []

    def test_non_numeric_blocks(self):
        issues = validate_samples(_frame(["0", "x", "1"], ["1", "2", "3"]))
        assert IssueType.NON_NUMERIC in _types(issues)
        assert blocking_issues(issues)[0].column_name == "t"
        assert blocking_issues(issues)[0].row_number == 1

    def test_infinite_value_blocks(self):
        issues = validate_samples(_frame(["0", "0.5", "1"], ["1", "inf", "3"]))
        assert IssueType.NON_FINITE in _types(blocking_issues(issues))

    def test_duplicate_abscissa_blocks(self):
        issues = validate_samples(_frame(["0", "0.5", "0.5", "1"], ["1", "2", "2", "3"]))
        duplicate = [i for i in issues if i.issue_type == IssueType.DUPLICATE_ABSCISSA]
        assert duplicate and duplicate[0].severity == IssueSeverity.HIGH
        assert duplicate[0].row_number == 2

    def test_unsorted_is_a_warning(self):
        issues = validate_samples(_frame(["1", "0", "0.5"], ["3", "1", "2"]))
        assert _types(issues) == {IssueType.UNSORTED}
        assert blocking_issues(issues) == []
        assert issues[0].row_number == 1

    def test_missing_cells_graded_by_share(self):
        few = validate_samples(_frame(["0", "0.25", "0.5", "0.75", "1", None], ["1"] * 6))
        assert few[0].issue_type == IssueType.MISSING_VALUE
        assert few[0].severity == IssueSeverity.LOW

        many = validate_samples(_frame(["0", None, None, "1"], ["1", "2", "3", "4"]))
        missing = [i for i in many if i.issue_type == IssueType.MISSING_VALUE]
        assert missing[0].severity == IssueSeverity.MEDIUM

    def test_too_few_points(self):
        issues = validate_samples(_frame(["0"], ["1"]))
        assert IssueType.TOO_FEW_POINTS in _types(blocking_issues(issues))

    def test_numeric_rows_skip_missing(self):
        rows = numeric_rows(_frame(["0", None, "1"], ["1", "2", "3"]))
        assert rows["t"].tolist() == [0.0, 1.0]
        assert rows.index.tolist() == [0, 2]
