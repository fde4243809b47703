import logging

from models.schemas import RunConfig
from services.cheb import CertificateError, check_sufficient
from services.parser import read_spline_json
from services.reporter import verdict_lines
from services.spline import SplineError

from commands.common import (
    EXIT_ERROR,
    EXIT_MALFORMED,
    EXIT_NOT_MET,
    EXIT_OK,
    INPUT_ERRORS,
    UsageError,
    load_data,
)

logger = logging.getLogger(__name__)


def cmd_check(cfg: RunConfig) -> int:
    """Print the alternation verdict for a stored spline; exit 0 when the sufficient condition holds."""
    if cfg.spline is None:
        raise UsageError("--spline is required")

    try:
        spline = read_spline_json(cfg.spline)
        data = load_data(cfg)
        if spline.interval != data.interval:
            logger.warning(f"spline interval {spline.interval} differs from the data interval {data.interval}")
        verdict = check_sufficient(data, spline, cfg.tau)

    except INPUT_ERRORS + (SplineError, CertificateError) as e:
        logger.error(str(e))
        return EXIT_MALFORMED
    except UsageError:
        raise
    except Exception as e:
        logger.error(f"Check failed: {e}", exc_info=True)
        return EXIT_ERROR

    print(f"{data.label}:")
    print("\n".join(f"  {line}" for line in verdict_lines(verdict)))
    return EXIT_OK if verdict.sufficient_met else EXIT_NOT_MET
