import logging
from pathlib import Path
from typing import List, Optional

from models.schemas import BenchmarkId, OptimizerKind, RunConfig, SampledFunction, TrainConfig, TrainResult
from services.bnb import solve_one_knot
from services.cheb import refine_from_network
from services.figures import history_frame
from services.funcs import TABLE_BIG_M, TABLE_EPOCHS
from services.neural import DivergenceError, chebyshev_loss, extract_knots, init_net, train
from services.reporter import write_table
from utils.file_manager import TABLE_FILE, TRAIN_REPORT_FILE, history_file, write_csv, write_json

from commands.common import (
    EXIT_DIVERGED,
    EXIT_ERROR,
    EXIT_MALFORMED,
    EXIT_OK,
    INPUT_ERRORS,
    UsageError,
    bnb_options,
    load_data,
    output_dir,
)

logger = logging.getLogger(__name__)

DEFAULT_EPOCHS = 50


def default_epochs(fn: Optional[BenchmarkId]) -> int:
    return TABLE_EPOCHS.get(fn, DEFAULT_EPOCHS) if fn is not None else DEFAULT_EPOCHS


def run_optimizer(data: SampledFunction, cfg: TrainConfig) -> TrainResult:
    """Train from the seeded start, then freeze the learned knot and refit the pieces."""
    net, history = train(init_net(cfg.hidden, cfg.seed), data, cfg)
    c, d = data.interval
    refined, refined_dev = refine_from_network(net, data)
    return TrainResult(
        optimizer=cfg.optimizer,
        net=net,
        history=history,
        knots=extract_knots(net, c, d),
        deviation=chebyshev_loss(net, data),
        refined_knot=refined.knot,
        refined_deviation=refined_dev,
    )


def train_both(data: SampledFunction, cfg: RunConfig, epochs: int, out: Optional[Path] = None) -> List[TrainResult]:
    results = []
    for optimizer in OptimizerKind:
        train_cfg = TrainConfig(
            epochs=epochs,
            learning_rate=cfg.learning_rate,
            seed=cfg.seed,
            optimizer=optimizer,
            hidden=cfg.hidden,
        )
        result = run_optimizer(data, train_cfg)
        results.append(result)
        if out is not None:
            write_csv(out / history_file(optimizer.value), history_frame(result.history))
    return results


def cmd_train(cfg: RunConfig) -> int:
    """Train with ADAM and ADAMAX and set the results beside the solver row."""
    out = output_dir(cfg)

    try:
        data = load_data(cfg)
        epochs = cfg.epochs if cfg.epochs is not None else default_epochs(cfg.fn)
        results = train_both(data, cfg, epochs, out)

        big_m = cfg.big_m if cfg.big_m is not None else TABLE_BIG_M.get(cfg.fn)
        report = solve_one_knot(data, bnb_options(cfg, big_m), tau=cfg.tau)

        write_json(out / TRAIN_REPORT_FILE, {"label": data.label, "epochs": epochs, "results": results})
        write_table(out / TABLE_FILE, [(data.label, report, results)])

    except DivergenceError as e:
        logger.error(f"Training diverged: {e}")
        return EXIT_DIVERGED
    except INPUT_ERRORS as e:
        logger.error(str(e))
        return EXIT_MALFORMED
    except UsageError:
        raise
    except Exception as e:
        logger.error(f"Training failed: {e}", exc_info=True)
        return EXIT_ERROR

    print(f"{data.label}: solver max abs dev {report.objective:.6g}, knot "
          f"{'-' if report.best_spline.knot is None else f'{report.best_spline.knot:.6g}'}")
    for result in results:
        knots = ", ".join(f"{k:.6g}" for k in result.knots) or "none"
        print(f"  [{result.optimizer.value}] dev {result.deviation:.6g}, knots [{knots}], "
              f"{result.history.wall_time:.2f}s; refit dev {result.refined_deviation:.6g}")
    return EXIT_OK
