"""One-knot and truncated-power linear splines: classification, evaluation, conversion."""
import logging
import math
from typing import Tuple, Union

import numpy as np

from models.schemas import (
    AffinePiece,
    DeviationProfile,
    FreeKnotError,
    LinearSpline,
    OneKnotSpline,
    ReluNet1,
    SampledFunction,
    SplineKind,
)
from services.neural import KNOT_MERGE_RTOL, extract_knots, forward

logger = logging.getLogger(__name__)

IDENTICAL_TOL = 1e-12
DEFAULT_TAU = 1e-6

Spline = Union[OneKnotSpline, LinearSpline]


class SplineError(FreeKnotError):
    """Raised for evaluation outside the spline's interval or malformed spline data."""
    pass


def _identical(p1: AffinePiece, p2: AffinePiece) -> bool:
    return (abs(p1.slope - p2.slope) <= IDENTICAL_TOL * max(1.0, abs(p1.slope), abs(p2.slope))
            and abs(p1.intercept - p2.intercept) <= IDENTICAL_TOL * max(1.0, abs(p1.intercept), abs(p2.intercept)))


def _single(piece: AffinePiece, interval: Tuple[float, float]) -> OneKnotSpline:
    return OneKnotSpline(piece1=piece, piece2=piece, kind=SplineKind.SINGLE, knot=None, interval=interval)


def make_one_knot(
    piece1: AffinePiece,
    piece2: AffinePiece,
    kind: SplineKind,
    interval: Tuple[float, float],
) -> OneKnotSpline:
    """Classify max/min of two pieces on [c, d].

    The result is Single when the pieces coincide, are parallel, or cross outside
    the open interval; it then carries the piece that is active on all of [c, d].
    """
    c, d = float(interval[0]), float(interval[1])
    interval = (c, d)
    if kind == SplineKind.SINGLE or _identical(piece1, piece2):
        return _single(piece1, interval)

    pick = max if kind == SplineKind.MAX_OF_TWO else min
    if piece1.slope == piece2.slope:
        dominant = pick((piece1, piece2), key=lambda p: p.intercept)
        return _single(dominant, interval)

    knot = (piece2.intercept - piece1.intercept) / (piece1.slope - piece2.slope)
    if not (c < knot < d) or not math.isfinite(knot):
        mid = 0.5 * (c + d)
        dominant = pick((piece1, piece2), key=lambda p: p(mid))
        return _single(dominant, interval)
    return OneKnotSpline(piece1=piece1, piece2=piece2, kind=kind, knot=knot, interval=interval)


def left_right_pieces(s: OneKnotSpline) -> Tuple[AffinePiece, AffinePiece]:
    """Pieces active left and right of the knot."""
    if s.kind == SplineKind.SINGLE:
        return s.piece1, s.piece1
    flatter, steeper = sorted((s.piece1, s.piece2), key=lambda p: p.slope)
    if s.kind == SplineKind.MAX_OF_TWO:
        return flatter, steeper
    return steeper, flatter


def eval_one_knot(s: OneKnotSpline, t):
    ts = np.asarray(t, dtype=float)
    v1 = s.piece1(ts)
    if s.kind == SplineKind.MAX_OF_TWO:
        out = np.maximum(v1, s.piece2(ts))
    elif s.kind == SplineKind.MIN_OF_TWO:
        out = np.minimum(v1, s.piece2(ts))
    else:
        out = v1
    return float(out) if ts.ndim == 0 else out


def eval_truncated_power(s: LinearSpline, t):
    ts = np.asarray(t, dtype=float)
    c, d = s.interval
    slack = 1e-12 * (d - c)
    if np.any(ts < c - slack) or np.any(ts > d + slack):
        raise SplineError(f"evaluation point outside [{c}, {d}]")
    a = np.asarray(s.a, dtype=float)
    knots = np.asarray(s.knots[:-1], dtype=float)
    flat = np.atleast_1d(ts)
    out = a[0] + np.maximum(np.subtract.outer(flat, knots), 0.0) @ a[1:]
    return float(out[0]) if ts.ndim == 0 else out.reshape(ts.shape)


def evaluate(s: Spline, t):
    if isinstance(s, OneKnotSpline):
        return eval_one_knot(s, t)
    return eval_truncated_power(s, t)


def to_truncated_power(s: OneKnotSpline, c: float, d: float) -> LinearSpline:
    if s.kind == SplineKind.SINGLE or s.knot is None or not (c < s.knot < d):
        # affine on [c, d]: whichever piece the spline follows there
        mid = 0.5 * (c + d)
        piece = s.piece1 if s.kind == SplineKind.SINGLE else min(
            (s.piece1, s.piece2), key=lambda p: abs(p(mid) - eval_one_knot(s, mid))
        )
        return LinearSpline(a=(piece(c), piece.slope), knots=(c, d))
    left, right = left_right_pieces(s)
    return LinearSpline(a=(left(c), left.slope, right.slope - left.slope), knots=(c, s.knot, d))


def relu_to_spline(net: ReluNet1, c: float, d: float) -> LinearSpline:
    """The linear spline computed by ``net`` on [c, d]."""
    knots = extract_knots(net, c, d)
    breaks = np.array([c] + knots + [d])
    mids = 0.5 * (breaks[:-1] + breaks[1:])
    w1 = np.asarray(net.w1)
    b1 = np.asarray(net.b1)
    w2 = np.asarray(net.w2)
    active = (np.multiply.outer(mids, w1) + b1) > 0
    slopes = active.astype(float) @ (w2 * w1)
    a = [forward(net, c), float(slopes[0])] + np.diff(slopes).tolist()
    return LinearSpline(a=tuple(a), knots=tuple(float(k) for k in breaks))


def deviation(s: Spline, data: SampledFunction, tau: float = DEFAULT_TAU) -> DeviationProfile:
    residuals = data.f - evaluate(s, data.t)
    mag = np.abs(residuals)
    sup = float(mag.max())
    argmax = np.flatnonzero(mag >= sup - tau * sup)
    return DeviationProfile(residuals=residuals, sup=sup, argmax_indices=tuple(int(i) for i in argmax))


def spline_to_dict(s: OneKnotSpline) -> dict:
    pieces = [s.piece1] if s.kind == SplineKind.SINGLE else [s.piece1, s.piece2]
    return {
        "kind": s.kind.value,
        "pieces": [{"slope": p.slope, "intercept": p.intercept} for p in pieces],
        "knot": s.knot,
        "interval": [s.interval[0], s.interval[1]],
    }


def spline_from_dict(payload: dict) -> OneKnotSpline:
    try:
        kind = SplineKind(payload["kind"])
        pieces = [AffinePiece(slope=float(p["slope"]), intercept=float(p["intercept"]))
                  for p in payload["pieces"]]
        c, d = (float(v) for v in payload["interval"])
    except (KeyError, TypeError, ValueError) as e:
        raise SplineError(f"malformed spline: {e}")
    if not pieces or len(pieces) > 2:
        raise SplineError(f"a one-knot spline has one or two pieces, got {len(pieces)}")
    if kind != SplineKind.SINGLE and len(pieces) != 2:
        raise SplineError(f"a {kind.value} spline needs two pieces")
    if not c < d:
        raise SplineError(f"invalid interval [{c}, {d}]")
    piece2 = pieces[1] if len(pieces) == 2 else pieces[0]
    return make_one_knot(pieces[0], piece2, kind, (c, d))


def merge_tolerance(c: float, d: float) -> float:
    return KNOT_MERGE_RTOL * (d - c)
