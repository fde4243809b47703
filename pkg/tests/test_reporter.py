import json

import numpy as np
import pytest
from openpyxl import load_workbook

from models.schemas import AffinePiece, OptimizerKind, ReluNet1, SplineKind, TrainHistory, TrainResult
from services.bnb import solve_one_knot
from services.figures import FIGURE_COLUMNS, figure_frame, history_frame
from services.reporter import (
    FAILED,
    TABLE_COLUMNS,
    generate_workbook,
    render_table,
    table_frame,
    verdict_lines,
    write_table,
)
from services.spline import make_one_knot
from utils.file_manager import thread_cap, write_json


@pytest.fixture
def abs_report(abs_data):
    return solve_one_knot(abs_data)


@pytest.fixture
def net_result():
    return TrainResult(
        optimizer=OptimizerKind.ADAMAX,
        net=ReluNet1(w1=(1.0,), b1=(0.0,), w2=(1.0,), b2=0.0),
        history=TrainHistory(loss_per_epoch=[1.0, 0.75], final_loss=0.75, wall_time=0.5),
        knots=[0.0],
        deviation=0.75,
        refined_knot=0.0,
        refined_deviation=0.0,
    )


class TestTable:
    def test_solver_row(self, abs_report):
        frame = table_frame([("abs", abs_report, [])])
        assert list(frame.columns) == TABLE_COLUMNS
        row = frame.iloc[0]
        assert row["Fun"] == "abs"
        assert row["max or min"] == "max"
        assert abs(float(row["Knot"])) < 1e-4
        assert row["Max. abs. dev."] == "0.0000"

    def test_network_rows_in_brackets(self, abs_report, net_result):
        frame = table_frame([("abs", abs_report, [net_result])])
        assert len(frame) == 3
        assert frame.iloc[1]["M"] == "[adamax]"
        assert frame.iloc[1]["Max. abs. dev."] == "[0.7500]"
        assert frame.iloc[1]["Knot"] == "[0.0000]"
        assert frame.iloc[2]["M"] == "[adamax+fit]"

    def test_failed_run(self):
        frame = table_frame([("f5", None, [])])
        assert frame.iloc[0]["Max. abs. dev."] == FAILED

    def test_single_piece_label(self, samples):
        t = np.linspace(-1.0, 1.0, 9)
        report = solve_one_knot(samples(t, 3.0 * t, label="line"))
        assert table_frame([("line", report, [])]).iloc[0]["max or min"] == "one piece"
        assert table_frame([("line", report, [])]).iloc[0]["Knot"] == "-"

    def test_written_text(self, tmp_path, abs_report):
        path = write_table(tmp_path / "table.txt", [("abs", abs_report, [])])
        text = path.read_text()
        assert text.splitlines()[0].split() == ["Fun", "M", "Knot", "Max.", "abs.", "dev.", "max", "or", "min", "Time"]
        assert "abs" in text.splitlines()[1]

    def test_empty_table(self):
        assert render_table(table_frame([])).startswith("Fun")


class TestWorkbook:
    def test_sheets(self, tmp_path, abs_report, net_result):
        path = generate_workbook(tmp_path / "table.xlsx", [("abs", abs_report, [net_result]), ("f5", None, [])])
        workbook = load_workbook(path)
        assert workbook.sheetnames == ["Results", "Certificates"]

        results = workbook["Results"]
        assert [cell.value for cell in results[1]] == TABLE_COLUMNS
        assert results.cell(row=2, column=1).value == "abs"
        assert results.cell(row=5, column=4).value == FAILED

        certificates = workbook["Certificates"]
        assert certificates.cell(row=2, column=2).value == abs_report.certificate.branch.value
        assert certificates.cell(row=3, column=2).value == FAILED


class TestVerdictLines:
    def test_two_piece_lines(self, abs_report):
        lines = verdict_lines(abs_report.certificate)
        assert lines[0] == f"certificate: {abs_report.certificate.branch.value}"
        assert any(line.startswith("left subinterval") for line in lines)


class TestFigures:
    def test_figure_frame(self, abs_data):
        s = make_one_knot(AffinePiece(slope=0.0, intercept=0.5), AffinePiece(slope=0.0, intercept=0.5),
                          SplineKind.SINGLE, abs_data.interval)
        frame = figure_frame(abs_data, s)
        assert list(frame.columns) == FIGURE_COLUMNS
        assert len(frame) == abs_data.size
        np.testing.assert_allclose(frame["residual"], 0.5 - np.abs(abs_data.t))

    def test_history_frame(self):
        frame = history_frame(TrainHistory(loss_per_epoch=[3.0, 2.0, 2.5], final_loss=2.5))
        assert frame["epoch"].tolist() == [1, 2, 3]
        assert frame["loss"].tolist() == [3.0, 2.0, 2.5]


class TestFiles:
    def test_json_report(self, tmp_path, abs_report):
        path = write_json(tmp_path / "report.json", abs_report)
        payload = json.loads(path.read_text())
        assert payload["label"] == "abs"
        assert payload["winner"] == "max_problem"
        assert payload["best_spline"]["kind"] == "max"

    def test_thread_cap(self, monkeypatch):
        monkeypatch.delenv("FREEKNOT_THREADS", raising=False)
        assert thread_cap(5) == 5
        monkeypatch.setenv("FREEKNOT_THREADS", "2")
        assert thread_cap(5) == 2
        monkeypatch.setenv("FREEKNOT_THREADS", "zero")
        assert thread_cap(5) == 5
