import logging

from models.schemas import MilpStatus, ProblemKind, RunConfig, SolveReport
from services.bnb import BUILDERS, oracle_enumerate, solve_one_knot
from services.figures import figure_frame
from services.milp import default_big_m, to_lp_format
from services.parser import write_samples_csv
from services.reporter import write_table
from services.spline import spline_to_dict
from utils.file_manager import (
    MODEL_FILE,
    REPORT_FILE,
    SPLINE_FILE,
    TABLE_FILE,
    figure_file,
    samples_file,
    write_csv,
    write_json,
    write_text,
)

from commands.common import (
    EXIT_ERROR,
    EXIT_LIMIT,
    EXIT_MALFORMED,
    EXIT_OK,
    INPUT_ERRORS,
    UsageError,
    bnb_options,
    load_data,
    output_dir,
)

logger = logging.getLogger(__name__)


def summary_lines(report: SolveReport) -> list:
    spline = report.best_spline
    lines = [
        f"{report.label}: max abs dev {report.objective:.6g} ({report.status.value})",
        f"  kind {spline.kind.value}, knot {'-' if spline.knot is None else f'{spline.knot:.6g}'}, "
        f"winner {report.winner.value}",
        f"  max model {report.max_objective:.6g}, min model {report.min_objective:.6g}",
        f"  nodes {report.nodes}, LP pivots {report.lp_pivots}, {report.wall_time:.2f}s, "
        f"big-M audit {report.bigM_audit.value}",
    ]
    if report.certificate is not None:
        lines.append(f"  certificate {report.certificate.branch.value}")
    lines.extend(f"  warning: {w}" for w in report.warnings)
    return lines


def cmd_solve(cfg: RunConfig) -> int:
    """Solve one data set and write report.json, spline.json and the figure CSV."""
    out = output_dir(cfg)

    try:
        data = load_data(cfg)
        opts = bnb_options(cfg)
        solver = oracle_enumerate if cfg.oracle else solve_one_knot
        report = solver(data, opts, tau=cfg.tau)

        write_json(out / REPORT_FILE, report)
        write_json(out / SPLINE_FILE, spline_to_dict(report.best_spline))
        if cfg.figure:
            write_csv(out / figure_file(data.label), figure_frame(data, report.best_spline))
        if cfg.emit_table:
            write_table(out / TABLE_FILE, [(data.label, report, [])])
        if cfg.emit_samples:
            write_samples_csv(data, out / samples_file(data.label))
        if cfg.export_lp is not None:
            M = report.big_m.get(cfg.export_lp.value) or opts.M_override or default_big_m(data)
            write_text(out / MODEL_FILE, to_lp_format(BUILDERS[ProblemKind(cfg.export_lp)](data, M)))

    except INPUT_ERRORS as e:
        logger.error(str(e))
        return EXIT_MALFORMED
    except UsageError:
        raise
    except Exception as e:
        logger.error(f"Solve failed: {e}", exc_info=True)
        return EXIT_ERROR

    print("\n".join(summary_lines(report)))
    if report.status != MilpStatus.OPTIMAL:
        logger.warning(f"{data.label}: stopped at {report.status.value} with gap {report.gap:.3g}")
        return EXIT_LIMIT
    return EXIT_OK
