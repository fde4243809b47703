import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import pandas as pd
from openpyxl import Workbook
from openpyxl.styles import Alignment, Font, PatternFill

from models.schemas import (
    AuditStatus,
    CertificateBranch,
    OptimalityVerdict,
    SolveReport,
    SplineKind,
    TrainResult,
    Winner,
)
from utils.file_manager import write_text

logger = logging.getLogger(__name__)

TABLE_COLUMNS = ["Fun", "M", "Knot", "Max. abs. dev.", "max or min", "Time"]
FAILED = "FAILED"

# Color scheme
COLORS = {
    "header_bg": "2563EB",  # Blue
    "header_fg": "FFFFFF",
    "met_bg": "10B981",  # Green
    "warning_bg": "F59E0B",  # Yellow/Orange
    "not_met_bg": "EF4444",  # Red
    "light_gray": "F3F4F6",
}


def get_certificate_color(branch: Optional[CertificateBranch]) -> str:
    """Get background color for a certificate outcome."""
    if branch is None:
        return COLORS["warning_bg"]
    if branch == CertificateBranch.NOT_MET:
        return COLORS["not_met_bg"]
    return COLORS["met_bg"]


def _fill(color: str) -> PatternFill:
    return PatternFill(start_color=color, end_color=color, fill_type="solid")


def _num(value: Optional[float], digits: int = 4) -> str:
    return "-" if value is None else f"{value:.{digits}f}"


def kind_label(report: SolveReport) -> str:
    if report.best_spline.kind == SplineKind.SINGLE:
        return "one piece"
    return report.best_spline.kind.value


def winning_big_m(report: SolveReport) -> Optional[float]:
    key = "min_problem" if report.winner == Winner.MIN_PROBLEM else "max_problem"
    return report.big_m.get(key)


def solve_row(report: SolveReport) -> Dict[str, str]:
    M = winning_big_m(report)
    return {
        "Fun": report.label,
        "M": "-" if M is None else f"{M:g}",
        "Knot": _num(report.best_spline.knot),
        "Max. abs. dev.": _num(report.objective),
        "max or min": kind_label(report),
        "Time": f"{report.wall_time:.2f}",
    }


def network_row(result: TrainResult) -> Dict[str, str]:
    """Network results go in brackets under the solver row."""
    knots = ", ".join(f"{k:.4f}" for k in result.knots) or "none"
    return {
        "Fun": "",
        "M": f"[{result.optimizer.value}]",
        "Knot": f"[{knots}]",
        "Max. abs. dev.": f"[{result.deviation:.4f}]",
        "max or min": "",
        "Time": f"[{result.history.wall_time:.2f}]",
    }


def refined_row(result: TrainResult) -> Optional[Dict[str, str]]:
    if result.refined_deviation is None:
        return None
    return {
        "Fun": "",
        "M": f"[{result.optimizer.value}+fit]",
        "Knot": f"[{_num(result.refined_knot)}]",
        "Max. abs. dev.": f"[{result.refined_deviation:.4f}]",
        "max or min": "",
        "Time": "",
    }


def failure_row(label: str) -> Dict[str, str]:
    return {"Fun": label, "M": "-", "Knot": "-", "Max. abs. dev.": FAILED, "max or min": "-", "Time": "-"}


def table_frame(
    entries: Sequence[tuple],
) -> pd.DataFrame:
    """
    Rows for the result table. Each entry is (label, SolveReport or None, [TrainResult]);
    a missing report marks a failed run.
    """
    rows: List[Dict[str, str]] = []
    for label, report, nets in entries:
        rows.append(solve_row(report) if report is not None else failure_row(label))
        for result in nets:
            rows.append(network_row(result))
            refined = refined_row(result)
            if refined is not None:
                rows.append(refined)
    return pd.DataFrame(rows, columns=TABLE_COLUMNS)


def render_table(frame: pd.DataFrame) -> str:
    if frame.empty:
        return "  ".join(TABLE_COLUMNS) + "\n"
    return frame.to_string(index=False) + "\n"


def write_table(path: Path, entries: Sequence[tuple]) -> Path:
    return write_text(path, render_table(table_frame(entries)))


def verdict_lines(verdict: OptimalityVerdict) -> List[str]:
    details = verdict.details
    lines = [
        f"certificate: {verdict.branch.value}",
        f"sufficient condition met: {'yes' if verdict.sufficient_met else 'no'}",
        f"maximal deviation: {details.sup:.6g} (tolerance {details.tolerance:g})",
        f"longest alternating sequence: {details.longest_alternating}",
    ]
    if details.per_subinterval is not None:
        left, right = details.per_subinterval
        lo, hi = details.subinterval_levels
        lines.append(f"left subinterval: {left} alternating points, largest deviation {lo:.6g}")
        lines.append(f"right subinterval: {right} alternating points, largest deviation {hi:.6g}")
    lines.extend(f"note: {note}" for note in verdict.notes)
    return lines


def generate_workbook(path: Path, entries: Sequence[tuple]):
    """Write the result table and the certificate outcomes to a styled workbook."""
    workbook = Workbook()

    # Remove default sheet
    workbook.remove(workbook.active)

    create_results_sheet(workbook, table_frame(entries))
    create_certificates_sheet(workbook, entries)

    workbook.save(path)
    logger.info(f"Workbook written to {path}")
    return path


def _header(ws, headers: List[str]):
    header_fill = _fill(COLORS["header_bg"])
    header_font = Font(color=COLORS["header_fg"], bold=True)
    for col_idx, header in enumerate(headers, 1):
        cell = ws.cell(row=1, column=col_idx, value=header)
        cell.fill = header_fill
        cell.font = header_font
        cell.alignment = Alignment(horizontal='center')


def create_results_sheet(workbook: Workbook, frame: pd.DataFrame):
    ws = workbook.create_sheet("Results")
    _header(ws, TABLE_COLUMNS)

    for row_idx, row in enumerate(frame.itertuples(index=False), start=2):
        for col_idx, value in enumerate(row, 1):
            cell = ws.cell(row=row_idx, column=col_idx, value=value)
            if value == FAILED:
                cell.fill = _fill(COLORS["not_met_bg"])
                cell.font = Font(color="FFFFFF", bold=True)

        # Alternate row colors
        if row_idx % 2 == 0:
            for c in range(1, len(TABLE_COLUMNS) + 1):
                if ws.cell(row=row_idx, column=c).value != FAILED:
                    ws.cell(row=row_idx, column=c).fill = _fill(COLORS["light_gray"])

    for letter, width in zip("ABCDEF", (8, 10, 24, 16, 12, 10)):
        ws.column_dimensions[letter].width = width


def create_certificates_sheet(workbook: Workbook, entries: Sequence[tuple]):
    ws = workbook.create_sheet("Certificates")
    headers = ["Fun", "Certificate", "Left", "Right", "Alternating", "Big-M audit", "Notes"]
    _header(ws, headers)

    for row_idx, (label, report, _) in enumerate(entries, start=2):
        ws.cell(row=row_idx, column=1, value=label)
        verdict = report.certificate if report is not None else None
        branch = verdict.branch if verdict is not None else None
        status_cell = ws.cell(row=row_idx, column=2, value=branch.value if branch else FAILED)
        status_cell.fill = _fill(get_certificate_color(branch) if report is not None else COLORS["not_met_bg"])
        status_cell.font = Font(color="FFFFFF", bold=True)
        status_cell.alignment = Alignment(horizontal='center')
        if verdict is None:
            continue

        counts = verdict.details.per_subinterval
        ws.cell(row=row_idx, column=3, value=counts[0] if counts else None)
        ws.cell(row=row_idx, column=4, value=counts[1] if counts else None)
        ws.cell(row=row_idx, column=5, value=verdict.details.longest_alternating)
        audit_cell = ws.cell(row=row_idx, column=6, value=report.bigM_audit.value)
        if report.bigM_audit == AuditStatus.FAIL:
            audit_cell.fill = _fill(COLORS["warning_bg"])
        ws.cell(row=row_idx, column=7, value="; ".join(verdict.notes + report.warnings))

    ws.column_dimensions['A'].width = 8
    ws.column_dimensions['B'].width = 22
    ws.column_dimensions['F'].width = 12
    ws.column_dimensions['G'].width = 80
