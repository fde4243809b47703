"""
Fixed-knot Chebyshev fits and alternation-based optimality certificates.

All fits are small LPs in inequality form, solved through services.lp.
"""
import logging
from typing import List, Optional, Tuple, Union

import numpy as np

from models.schemas import (
    AffinePiece,
    AlternationReport,
    CertificateBranch,
    FreeKnotError,
    LpStatus,
    OneKnotSpline,
    OptimalityVerdict,
    ReluNet1,
    SampledFunction,
    SplineKind,
)
from services.lp import solve_inequality_form
from services.neural import extract_knots
from services.spline import DEFAULT_TAU, Spline, deviation, make_one_knot, merge_tolerance

logger = logging.getLogger(__name__)

TAU_ALT = DEFAULT_TAU
ZERO_SUP = 1e-300

IndexRange = Union[None, range, slice, Tuple[int, int]]


class CertificateError(FreeKnotError):
    """Raised for fits on empty ranges or knots outside the interval."""
    pass


def _indices(n: int, index_range: IndexRange) -> np.ndarray:
    if index_range is None:
        return np.arange(n)
    if isinstance(index_range, tuple):
        index_range = range(*index_range)
    if isinstance(index_range, range):
        idx = np.asarray(index_range, dtype=np.int64)
        return idx[(idx >= 0) & (idx < n)]
    return np.arange(n)[index_range]


def _line_rows(T: np.ndarray, F: np.ndarray, width: int, a_col: int, b_col: int, e_col: int):
    """Rows of |F - (a T + b)| <= e in a `width`-column layout."""
    k = T.size
    G = np.zeros((2 * k, width))
    G[:k, a_col], G[:k, b_col], G[:k, e_col] = T, 1.0, -1.0
    G[k:, a_col], G[k:, b_col], G[k:, e_col] = -T, -1.0, -1.0
    return G, np.concatenate([F, -F])


def best_line(data: SampledFunction, index_range: IndexRange = None) -> Tuple[AffinePiece, float]:
    """Chebyshev-optimal affine fit on a range of grid indices."""
    idx = _indices(data.size, index_range)
    if idx.size == 0:
        raise CertificateError("best_line needs at least one point")
    T, F = data.t[idx], data.f[idx]
    if idx.size == 1:
        return AffinePiece(slope=0.0, intercept=float(F[0])), 0.0
    if idx.size == 2:
        slope = (F[1] - F[0]) / (T[1] - T[0])
        return AffinePiece(slope=float(slope), intercept=float(F[0] - slope * T[0])), 0.0

    G, h = _line_rows(T, F, 3, 0, 1, 2)
    fit = solve_inequality_form(G, h, np.array([0.0, 0.0, 1.0]))
    if fit.status != LpStatus.OPTIMAL:
        raise CertificateError(f"line fit LP ended {fit.status.value}")
    piece = AffinePiece(slope=float(fit.x[0]), intercept=float(fit.x[1]))
    dev = float(np.max(np.abs(F - piece(T))))
    return piece, dev


def fixed_knot_fit(data: SampledFunction, theta: float) -> Tuple[OneKnotSpline, float]:
    """Best continuous two-piece spline whose knot is exactly theta."""
    c, d = data.interval
    if not c < theta < d:
        raise CertificateError(f"knot {theta} outside ({c}, {d})")
    tol = merge_tolerance(c, d)
    t, f = data.t, data.f
    left = t <= theta + tol
    right = t >= theta - tol

    # columns a1, b1, a2, b2, e
    G_left, h_left = _line_rows(t[left], f[left], 5, 0, 1, 4)
    G_right, h_right = _line_rows(t[right], f[right], 5, 2, 3, 4)
    continuity = np.array([[theta, 1.0, -theta, -1.0, 0.0], [-theta, -1.0, theta, 1.0, 0.0]])
    G = np.vstack([G_left, G_right, continuity])
    h = np.concatenate([h_left, h_right, [0.0, 0.0]])
    fit = solve_inequality_form(G, h, np.array([0.0, 0.0, 0.0, 0.0, 1.0]))
    if fit.status != LpStatus.OPTIMAL:
        raise CertificateError(f"fixed-knot LP ended {fit.status.value}")

    p1 = AffinePiece(slope=float(fit.x[0]), intercept=float(fit.x[1]))
    p2 = AffinePiece(slope=float(fit.x[2]), intercept=float(fit.x[3]))
    if p1.slope < p2.slope:
        kind = SplineKind.MAX_OF_TWO
    elif p1.slope > p2.slope:
        kind = SplineKind.MIN_OF_TWO
    else:
        kind = SplineKind.SINGLE
    spline = make_one_knot(p1, p2, kind, (c, d))
    return spline, deviation(spline, data).sup


def _alternating(indices: np.ndarray, residuals: np.ndarray) -> List[int]:
    """One longest sign-alternating subsequence: the largest entry of each sign run."""
    seq: List[int] = []
    for i in indices:
        if seq and np.sign(residuals[i]) == np.sign(residuals[seq[-1]]):
            if abs(residuals[i]) > abs(residuals[seq[-1]]):
                seq[-1] = int(i)
        else:
            seq.append(int(i))
    return seq


def _extremes(indices: np.ndarray, residuals: np.ndarray, tau: float,
              sup: Optional[float] = None) -> Tuple[float, np.ndarray]:
    """Largest |residual| on `indices` and the points within tau of `sup` (default: that largest value)."""
    mag = np.abs(residuals[indices])
    level = float(mag.max()) if mag.size else 0.0
    threshold = level if sup is None else sup
    if threshold <= ZERO_SUP:
        return level, np.empty(0, dtype=np.int64)
    return level, indices[mag >= (1.0 - tau) * threshold]


def find_alternating(data: SampledFunction, s: Spline, tau: float = TAU_ALT) -> AlternationReport:
    if not 0 <= tau < 0.5:
        raise CertificateError(f"tolerance {tau} outside [0, 0.5)")
    r = deviation(s, data, tau).residuals
    all_idx = np.arange(data.size)
    sup, extremes = _extremes(all_idx, r, tau)
    seq = _alternating(extremes, r)

    per_sub = levels = sub_seqs = None
    shared: Tuple[int, ...] = ()
    knot = getattr(s, "knot", None)
    c, d = data.interval
    if knot is not None and c < knot < d:
        tol = merge_tolerance(c, d)
        t = data.t
        counts, lv, seqs = [], [], []
        for side in (all_idx[t <= knot + tol], all_idx[t >= knot - tol]):
            # alternation is measured against the whole-interval deviation
            level, ext = _extremes(side, r, tau, sup)
            side_seq = _alternating(ext, r)
            counts.append(len(side_seq))
            lv.append(level)
            seqs.append(tuple(side_seq))
        per_sub = (counts[0], counts[1])
        levels = (lv[0], lv[1])
        sub_seqs = (seqs[0], seqs[1])
        shared = tuple(int(i) for i in all_idx[np.abs(t - knot) <= tol])

    return AlternationReport(
        tolerance=tau,
        sup=sup,
        extreme_indices=tuple(int(i) for i in extremes),
        longest_alternating=len(seq),
        sequence_indices=tuple(seq),
        per_subinterval=per_sub,
        subinterval_levels=levels,
        subinterval_sequences=sub_seqs,
        shared_knot_indices=shared,
    )


def check_sufficient(data: SampledFunction, s: OneKnotSpline, tau: float = TAU_ALT) -> OptimalityVerdict:
    """Sufficient optimality test: 3 + 3 alternating points, or 4 for a single piece."""
    report = find_alternating(data, s, tau)
    notes: List[str] = []
    if s.kind == SplineKind.SINGLE:
        branch = CertificateBranch.SINGLE_PIECE_4 if report.longest_alternating >= 4 else CertificateBranch.NOT_MET
    else:
        left, right = report.per_subinterval or (0, 0)
        met = left >= 3 and right >= 3
        branch = CertificateBranch.TWO_PIECES_3_AND_3 if met else CertificateBranch.NOT_MET
        if report.shared_knot_indices:
            notes.append("grid point at the knot counted in both subintervals")
    if branch == CertificateBranch.NOT_MET:
        notes.append("sufficient condition not met; this does not show the spline is suboptimal")
    logger.debug(f"{data.label}: certificate {branch.value}")
    return OptimalityVerdict(sufficient_met=branch != CertificateBranch.NOT_MET, branch=branch,
                             details=report, notes=notes)


def refine_from_network(net: ReluNet1, data: SampledFunction) -> Tuple[OneKnotSpline, float]:
    """Freeze the network's knot and refit the pieces exactly."""
    c, d = data.interval
    knots = extract_knots(net, c, d)
    if len(knots) == 1:
        return fixed_knot_fit(data, knots[0])
    piece, dev = best_line(data)
    return make_one_knot(piece, piece, SplineKind.SINGLE, (c, d)), dev
