"""Argument parsing, configuration merging, logging setup and exit codes shared by the commands."""
import argparse
import logging
import sys
from pathlib import Path
from typing import Dict, Optional

from pydantic import ValidationError

from models.schemas import BenchmarkId, BnbOptions, Branching, ProblemKind, RunConfig, SampledFunction
from services.funcs import GridError, make_grid, sample
from services.parser import ParserError, read_config_file, read_samples_csv, split_pair
from utils.file_manager import ensure_output_dir, thread_cap

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_LIMIT = 2
EXIT_DIVERGED = 3
EXIT_NOT_MET = 4
EXIT_USAGE = 64
EXIT_MALFORMED = 65

# config-file spellings that differ from RunConfig field names
CONFIG_ALIASES = {
    "m": "big_m",
    "lr": "learning_rate",
    "out": "output_dir",
    "output": "output_dir",
    "function": "fn",
}

# malformed input files and unusable samples (exit 65)
INPUT_ERRORS = (ParserError, GridError)

LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"


class UsageError(Exception):
    """Bad flags or an unusable combination of settings (exit 64)."""
    pass


class ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_common(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("general")
    group.add_argument("--config", help="key = value file; explicit flags take precedence")
    group.add_argument("--output-dir", "--out", dest="output_dir", help="output directory (default: out)")
    verbosity = group.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", default=False, help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", default=False, help="warnings and errors only")


def _interval(value: str):
    try:
        return split_pair(value)
    except ParserError as e:
        raise argparse.ArgumentTypeError(str(e))


def _add_input(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("input")
    source = group.add_mutually_exclusive_group()
    source.add_argument("--fn", choices=[b.value for b in BenchmarkId], help="built-in benchmark function")
    source.add_argument("--csv", help="CSV file with header t,f")
    group.add_argument("--interval", type=_interval, metavar="C,D", help="approximation interval (default -1,1)")
    group.add_argument("--c", type=float, help="left end of the interval")
    group.add_argument("--d", type=float, help="right end of the interval")
    group.add_argument("--h", type=float, help="grid step (default 1e-3)")


def _add_solver(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("solver")
    group.add_argument("--M", "--big-m", dest="big_m", type=float, help="big-M constant")
    group.add_argument("--abs-gap", type=float, help="absolute optimality gap (default 1e-7)")
    group.add_argument("--node-limit", type=int, help="branch-and-bound node limit per model")
    group.add_argument("--time-limit", type=float, help="time limit per model in seconds")
    group.add_argument("--branching", choices=[b.value for b in Branching])
    group.add_argument("--workers", type=int, help="threads evaluating open nodes")
    group.add_argument("--oracle", action="store_true", default=None,
                       help="enumerate every crossover instead of branch and bound (bench: cross-check)")
    group.add_argument("--tau", type=float, help="alternation tolerance (default 1e-6)")


def _add_training(parser: argparse.ArgumentParser):
    group = parser.add_argument_group("training")
    group.add_argument("--epochs", type=int, help="epochs (default per benchmark)")
    group.add_argument("--seed", type=int, help="initialisation seed")
    group.add_argument("--learning-rate", "--lr", dest="learning_rate", type=float)
    group.add_argument("--hidden", type=int, help="hidden nodes (default 1)")


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(
        prog="freeknot",
        description="Best uniform approximation by linear splines with one free knot.",
        argument_default=argparse.SUPPRESS,
    )
    commands = parser.add_subparsers(dest="command", required=True, parser_class=ArgumentParser)

    solve = commands.add_parser("solve", help="solve the max and the min model and keep the better spline",
                                argument_default=argparse.SUPPRESS)
    _add_common(solve)
    _add_input(solve)
    _add_solver(solve)
    solve.add_argument("--emit-table", action="store_true", default=None, help="also write table.txt")
    solve.add_argument("--emit-samples", action="store_true", default=None,
                       help="also write the sampled data to samples_<fn>.csv")
    solve.add_argument("--export-lp", choices=[k.value for k in ProblemKind],
                       help="write the chosen model to model.lp")
    solve.add_argument("--no-figure", dest="figure", action="store_false", default=None,
                       help="skip fig_<fn>.csv")

    bench = commands.add_parser("bench", help="run all five benchmark functions",
                                argument_default=argparse.SUPPRESS)
    _add_common(bench)
    _add_solver(bench)
    _add_training(bench)
    bench.add_argument("--h", type=float, help="grid step (default 1e-3)")
    bench.add_argument("--train", action="store_true", default=None,
                       help="also train the one-node network with both optimizers")

    train = commands.add_parser("train", help="train a one-hidden-layer ReLU network with ADAM and ADAMAX",
                                argument_default=argparse.SUPPRESS)
    _add_common(train)
    _add_input(train)
    _add_training(train)
    train.add_argument("--M", "--big-m", dest="big_m", type=float, help="big-M for the reference solve")

    check = commands.add_parser("check", help="test a spline against the alternation conditions",
                                argument_default=argparse.SUPPRESS)
    _add_common(check)
    _add_input(check)
    check.add_argument("--spline", help="spline JSON (spline.json or report.json)")
    check.add_argument("--tau", type=float, help="alternation tolerance (default 1e-6)")

    return parser


def setup_logging(verbose: bool = False, quiet: bool = False):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def _config_settings(path: str) -> Dict[str, str]:
    fields = set(RunConfig.model_fields) - {"command"}
    settings = {}
    for key, value in read_config_file(path).items():
        key = CONFIG_ALIASES.get(key, key)
        if key not in fields:
            raise UsageError(f"{path}: unknown setting '{key}'")
        settings[key] = value
    return settings


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then the flags that were given."""
    flags = {k: v for k, v in vars(args).items() if v is not None}
    for name in ("verbose", "quiet"):
        flags.pop(name, None)

    settings: Dict[str, object] = {}
    config_path = flags.pop("config", None)
    if config_path:
        settings.update(_config_settings(config_path))

    interval = flags.pop("interval", None)
    if interval is not None:
        flags["c"], flags["d"] = interval
    settings.update(flags)

    try:
        return RunConfig(**settings)
    except ValidationError as e:
        problems = "; ".join(f"{'.'.join(str(p) for p in err['loc']) or 'config'}: {err['msg']}"
                             for err in e.errors())
        raise UsageError(problems)


def load_data(cfg: RunConfig) -> SampledFunction:
    """The samples named by --fn or --csv."""
    if cfg.csv is not None:
        return read_samples_csv(Path(cfg.csv))
    if cfg.fn is not None:
        return sample(cfg.fn, make_grid(cfg.c, cfg.d, cfg.h))
    raise UsageError("one of --fn or --csv is required")


def output_dir(cfg: RunConfig) -> Path:
    try:
        return ensure_output_dir(cfg.output_dir)
    except OSError as e:
        raise UsageError(f"cannot write to {cfg.output_dir}: {e}")


def bnb_options(cfg: RunConfig, big_m: Optional[float] = None) -> BnbOptions:
    workers = max(1, min(cfg.workers, thread_cap(cfg.workers)))
    return BnbOptions(
        abs_gap=cfg.abs_gap,
        node_limit=cfg.node_limit,
        time_limit=cfg.time_limit,
        branching=cfg.branching,
        M_override=big_m if big_m is not None else cfg.big_m,
        workers=workers,
    )

