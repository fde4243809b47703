import logging
import sys
from typing import Optional, Sequence

from commands.bench import cmd_bench
from commands.check import cmd_check
from commands.common import EXIT_MALFORMED, EXIT_USAGE, UsageError, build_parser, resolve_config, setup_logging
from commands.solve import cmd_solve
from commands.train import cmd_train
from services.parser import ParserError

logger = logging.getLogger(__name__)

COMMANDS = {
    "solve": cmd_solve,
    "bench": cmd_bench,
    "train": cmd_train,
    "check": cmd_check,
}


def run(argv: Optional[Sequence[str]] = None) -> int:
    """Parse the command line, merge the configuration and dispatch; returns the exit code."""
    args = build_parser().parse_args(argv)
    setup_logging(verbose=getattr(args, "verbose", False), quiet=getattr(args, "quiet", False))

    try:
        cfg = resolve_config(args)
        return COMMANDS[cfg.command](cfg)
    except UsageError as e:
        print(f"freeknot {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ParserError as e:
        logger.error(str(e))
        return EXIT_MALFORMED
