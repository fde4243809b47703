import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional

from models.schemas import BenchmarkId, MilpStatus, RunConfig, SolveReport, TrainResult
from services.bnb import oracle_enumerate, solve_one_knot
from services.figures import figure_frame
from services.funcs import TABLE_BIG_M, TABLE_EPOCHS, benchmark_data
from services.reporter import generate_workbook, write_table
from utils.file_manager import REPORT_FILE, TABLE_FILE, WORKBOOK_FILE, figure_file, thread_cap, write_csv, write_json

from commands.common import EXIT_LIMIT, EXIT_OK, bnb_options, output_dir
from commands.train import train_both

logger = logging.getLogger(__name__)

MAX_CONCURRENT = 5
ORACLE_TOL = 1e-6


@dataclass
class BenchRun:
    fn: BenchmarkId
    report: Optional[SolveReport] = None
    oracle_objective: Optional[float] = None
    nets: List[TrainResult] = field(default_factory=list)
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None or self.report is None or self.report.status != MilpStatus.OPTIMAL

    def entry(self) -> tuple:
        return (self.fn.value, None if self.error else self.report, self.nets)

    def to_dict(self) -> dict:
        return {
            "report": self.report,
            "oracle_objective": self.oracle_objective,
            "networks": self.nets,
            "error": self.error,
        }


def run_one(fn: BenchmarkId, cfg: RunConfig, out) -> BenchRun:
    """Solve one benchmark with its reference big-M; failures are recorded, not raised."""
    run = BenchRun(fn=fn)
    try:
        data = benchmark_data(fn, h=cfg.h)
        big_m = cfg.big_m if cfg.big_m is not None else TABLE_BIG_M[fn]
        opts = bnb_options(cfg, big_m)
        run.report = solve_one_knot(data, opts, tau=cfg.tau)
        write_csv(out / figure_file(fn.value), figure_frame(data, run.report.best_spline))

        if cfg.oracle:
            run.oracle_objective = oracle_enumerate(data, opts, tau=cfg.tau).objective
            diff = abs(run.oracle_objective - run.report.objective)
            if diff > ORACLE_TOL:
                run.error = f"oracle objective differs by {diff:.3g}"
                logger.error(f"{fn.value}: {run.error}")

        if cfg.train:
            epochs = cfg.epochs if cfg.epochs is not None else TABLE_EPOCHS[fn]
            run.nets = train_both(data, cfg, epochs)

    except Exception as e:
        logger.error(f"{fn.value} failed: {e}", exc_info=True)
        run.error = str(e)
    return run


def cmd_bench(cfg: RunConfig) -> int:
    """All five benchmark functions; rows ordered by function id."""
    out = output_dir(cfg)
    functions = list(BenchmarkId)
    concurrent = min(MAX_CONCURRENT, thread_cap(MAX_CONCURRENT))
    logger.info(f"Benchmarking {len(functions)} functions at h={cfg.h:g} with {concurrent} concurrent runs")

    with ThreadPoolExecutor(max_workers=concurrent) as pool:
        runs = list(pool.map(lambda fn: run_one(fn, cfg, out), functions))

    entries = [run.entry() for run in runs]
    write_json(out / REPORT_FILE, {run.fn.value: run.to_dict() for run in runs})
    write_table(out / TABLE_FILE, entries)
    generate_workbook(out / WORKBOOK_FILE, entries)

    for run in runs:
        if run.report is not None and run.error is None:
            r = run.report
            knot = "-" if r.best_spline.knot is None else f"{r.best_spline.knot:.4f}"
            print(f"{run.fn.value}: dev {r.objective:.6g}, knot {knot}, {r.best_spline.kind.value}, "
                  f"certificate {r.certificate.branch.value}, {r.wall_time:.1f}s")
        else:
            print(f"{run.fn.value}: FAILED ({run.error or run.report.status.value})")

    failures = [run.fn.value for run in runs if run.failed]
    if failures:
        logger.warning(f"Failed or limit-terminated: {', '.join(failures)}")
        return EXIT_LIMIT
    return EXIT_OK
