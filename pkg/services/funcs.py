"""Grids over [c, d] and the five built-in benchmark functions."""
import logging
import math
from typing import Callable, Dict, Optional, Union

import numpy as np

from models.schemas import BenchmarkId, FreeKnotError, Grid, SampledFunction

logger = logging.getLogger(__name__)


class GridError(FreeKnotError):
    """Raised for invalid grid parameters or non-finite samples."""
    pass


Evaluator = Callable[[np.ndarray], np.ndarray]

BENCHMARKS: Dict[BenchmarkId, Evaluator] = {
    BenchmarkId.F1: lambda t: np.sqrt(np.abs(t)),
    BenchmarkId.F2: lambda t: np.sqrt(np.abs(t - 0.75)),
    BenchmarkId.F3: lambda t: np.sin(2.0 * np.pi * t),
    BenchmarkId.F4: lambda t: t**3 - 3.0 * t**2 + 2.0,
    BenchmarkId.F5: lambda t: 1.0 / (t**25 + 0.5),
}

# Big-M per benchmark for the reference runs
TABLE_BIG_M: Dict[BenchmarkId, float] = {
    BenchmarkId.F1: 300.0,
    BenchmarkId.F2: 300.0,
    BenchmarkId.F3: 1e4,
    BenchmarkId.F4: 1e4,
    BenchmarkId.F5: 1e5,
}

TABLE_EPOCHS: Dict[BenchmarkId, int] = {
    BenchmarkId.F1: 50,
    BenchmarkId.F2: 50,
    BenchmarkId.F3: 50,
    BenchmarkId.F4: 100,
    BenchmarkId.F5: 300,
}

DEFAULT_INTERVAL = (-1.0, 1.0)
DEFAULT_STEP = 1e-3


def make_grid(c: float, d: float, h: float) -> Grid:
    """Uniform grid c, c+h, ... with the last point clamped to d."""
    c, d, h = float(c), float(d), float(h)
    if not (math.isfinite(c) and math.isfinite(d) and math.isfinite(h)):
        raise GridError(f"grid parameters must be finite: c={c}, d={d}, h={h}")
    if not c < d:
        raise GridError(f"interval bounds out of order: c={c}, d={d}")
    if h <= 0:
        raise GridError(f"step must be positive, got h={h}")
    if h > d - c:
        raise GridError(f"step h={h} exceeds the interval length {d - c}")

    n = int(round((d - c) / h)) + 1
    n = max(n, 2)
    points = c + h * np.arange(n, dtype=float)
    points[-1] = d
    if n > 2 and points[-2] >= d:
        raise GridError(f"step h={h} does not resolve [{c}, {d}]")
    return Grid(c=c, d=d, h=h, points=points)


def grid_from_points(points) -> Grid:
    """Grid over arbitrary strictly increasing abscissae (CSV input)."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 1 or pts.size < 2:
        raise GridError("at least two abscissae are required")
    if not np.all(np.isfinite(pts)):
        raise GridError("abscissae must be finite")
    steps = np.diff(pts)
    if np.any(steps <= 0):
        raise GridError("abscissae must be strictly increasing")
    h = float(steps.mean())
    tol = 1e-12 * max(1.0, abs(h))
    uniform = bool(np.all(np.abs(steps[:-1] - steps[0]) <= tol))
    if uniform:
        h = float(steps[0])
    return Grid(c=float(pts[0]), d=float(pts[-1]), h=h, points=pts, uniform=uniform)


def sample(
    fid: Union[BenchmarkId, str, Evaluator],
    grid: Grid,
    label: Optional[str] = None,
) -> SampledFunction:
    """Evaluate a benchmark id or a caller-supplied evaluator on the grid."""
    if isinstance(fid, (BenchmarkId, str)):
        try:
            bid = BenchmarkId(fid)
        except ValueError:
            raise GridError(f"unknown benchmark function '{fid}'")
        values = BENCHMARKS[bid](grid.points)
        label = label or bid.value
    else:
        values = _evaluate(fid, grid.points)
        label = label or getattr(fid, "__name__", "custom")

    values = np.asarray(values, dtype=float)
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        j = int(bad[0])
        raise GridError(f"{label}: non-finite value at t={grid.points[j]!r} (index {j})")
    logger.debug(f"Sampled {label} on {grid.size} points")
    return SampledFunction(grid=grid, values=values, label=label)


def _evaluate(evaluator: Evaluator, points: np.ndarray) -> np.ndarray:
    # Vectorised call first; fall back to pointwise for scalar-only evaluators
    try:
        values = np.asarray(evaluator(points), dtype=float)
        if values.shape == points.shape:
            return values
    except (TypeError, ValueError):
        pass
    return np.array([float(evaluator(float(t))) for t in points])


def benchmark_data(fid: Union[BenchmarkId, str], h: float = DEFAULT_STEP,
                   c: float = DEFAULT_INTERVAL[0], d: float = DEFAULT_INTERVAL[1]) -> SampledFunction:
    return sample(fid, make_grid(c, d, h))
