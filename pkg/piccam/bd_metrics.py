"""
Bjøntegaard-delta statistics between rate-distortion curves.

log10(bpp) is fitted as a function of PSNR (or the reverse for BD-PSNR) with
either a natural cubic spline or a monotone piecewise-cubic (PCHIP) interpolant,
and the fits are integrated over the common range with adaptive quadrature.
"""

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, interpolate

from piccam import Interpolation
from piccam.errors import (
    BadRDPoint,
    InfinitePsnrPoint,
    NonMonotoneCurve,
    NoOverlap,
    OutOfRange,
    TooFewPoints,
)

MIN_CURVE_POINTS = 4
QUAD_RELATIVE_TOLERANCE = 1e-8
QUAD_SUBINTERVAL_LIMIT = 200


@dataclass(frozen=True)
class RDPoint:
    bpp: float
    psnr: float

    def __post_init__(self):
        if math.isinf(self.psnr) and self.psnr > 0:
            raise InfinitePsnrPoint(
                "Lossless points (infinite PSNR) cannot be placed on an RD curve"
            )
        if not math.isfinite(self.psnr):
            raise BadRDPoint(f"PSNR must be finite, got {self.psnr}")
        if not math.isfinite(self.bpp) or self.bpp <= 0:
            raise BadRDPoint(f"BPP must be finite and > 0, got {self.bpp}")

    def to_json(self) -> dict:
        return dict(bpp=self.bpp, psnr=self.psnr)


class RDCurve:
    """
    Points sorted by ascending PSNR, with strictly increasing PSNR and BPP.
    """

    def __init__(self, points: Iterable[RDPoint]):
        points = sorted(points, key=lambda p: p.psnr)
        if len(points) < MIN_CURVE_POINTS:
            raise TooFewPoints(
                f"An RD curve needs at least {MIN_CURVE_POINTS} points, got {len(points)}"
            )
        for prev, cur in zip(points, points[1:]):
            if not (cur.psnr > prev.psnr and cur.bpp > prev.bpp):
                raise NonMonotoneCurve(
                    f"RD points ({prev.bpp}, {prev.psnr}) and ({cur.bpp}, {cur.psnr}) "
                    "are not strictly increasing in both BPP and PSNR"
                )
        self.points: Tuple[RDPoint, ...] = tuple(points)

    @classmethod
    def from_pairs(cls, pairs: Iterable[Tuple[float, float]]) -> "RDCurve":
        return cls(RDPoint(float(b), float(p)) for b, p in pairs)

    @property
    def psnrs(self) -> np.ndarray:
        return np.array([p.psnr for p in self.points])

    @property
    def log_rates(self) -> np.ndarray:
        return np.log10([p.bpp for p in self.points])

    def psnr_span(self) -> Tuple[float, float]:
        return self.points[0].psnr, self.points[-1].psnr

    def scaled(self, rate_factor: float = 1.0, psnr_offset: float = 0.0) -> "RDCurve":
        return RDCurve(
            RDPoint(p.bpp * rate_factor, p.psnr + psnr_offset) for p in self.points
        )

    def to_json(self) -> List[dict]:
        return [p.to_json() for p in self.points]

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def __eq__(self, other):
        return isinstance(other, RDCurve) and self.points == other.points

    def __repr__(self):
        return f"RDCurve({[(p.bpp, p.psnr) for p in self.points]})"


def points_from_json(records: Sequence[dict]) -> List[RDPoint]:
    try:
        return [RDPoint(float(r["bpp"]), float(r["psnr"])) for r in records]
    except BadRDPoint:
        raise
    except (KeyError, TypeError, ValueError) as error:
        raise BadRDPoint(f"RD points need numeric 'bpp' and 'psnr': {error}")


def read_curve_points(fname) -> List[RDPoint]:
    with Path(fname).open() as istream:
        try:
            records = json.load(istream)
        except json.JSONDecodeError as error:
            raise BadRDPoint(f"{fname} is not a JSON RD curve: {error}")
    if not isinstance(records, list):
        raise BadRDPoint(f"{fname} must hold a list of RD points")
    return points_from_json(records)


def load_curve(fname) -> RDCurve:
    return RDCurve(read_curve_points(fname))


def save_curve(curve: RDCurve, fname) -> None:
    with Path(fname).open("w") as ostream:
        json.dump(curve.to_json(), ostream, indent=1)


def upper_envelope(points: Iterable[RDPoint]) -> List[RDPoint]:
    """
    Keeps the points that no cheaper point matches in PSNR: scanning by
    ascending BPP, a point survives if its PSNR beats every point before it.
    """
    result = []
    for point in sorted(points, key=lambda p: (p.bpp, -p.psnr)):
        if len(result) == 0 or (
            point.psnr > result[-1].psnr and point.bpp > result[-1].bpp
        ):
            result.append(point)
    return result


##################
## Interpolants ##
##################
def fit(x: np.ndarray, y: np.ndarray, interp: Interpolation):
    if interp is Interpolation.CubicSpline:
        return interpolate.CubicSpline(x, y, bc_type="natural")
    return interpolate.PchipInterpolator(x, y)


def integrate_fit(fitted, knots: np.ndarray, lo: float, hi: float) -> float:
    inner_knots = [k for k in knots if lo < k < hi]
    value, _ = integrate.quad(
        fitted,
        lo,
        hi,
        points=inner_knots or None,
        epsabs=0.0,
        epsrel=QUAD_RELATIVE_TOLERANCE,
        limit=QUAD_SUBINTERVAL_LIMIT,
    )
    return value


def _common_range(
    span1: Tuple[float, float],
    span2: Tuple[float, float],
    window: Optional[Tuple[float, float]] = None,
) -> Tuple[float, float]:
    lo = max(span1[0], span2[0])
    hi = min(span1[1], span2[1])
    if window is not None:
        lo, hi = max(lo, window[0]), min(hi, window[1])
    if not hi > lo:
        raise NoOverlap(f"Curves share no range of positive width ([{lo}, {hi}])")
    return lo, hi


def bd_rate(
    anchor: RDCurve,
    test: RDCurve,
    interp: Interpolation = Interpolation.MonotonePCHIP,
    window: Optional[Tuple[float, float]] = None,
) -> float:
    """
    Average rate difference of `test` against `anchor` at equal PSNR, in percent.
    Negative means `test` needs fewer bits. `window` restricts the PSNR range
    further than the automatic overlap.
    """
    lo, hi = _common_range(anchor.psnr_span(), test.psnr_span(), window)
    integrals = []
    for curve in (anchor, test):
        fitted = fit(curve.psnrs, curve.log_rates, interp)
        integrals.append(integrate_fit(fitted, curve.psnrs, lo, hi))
    avg_log_diff = (integrals[1] - integrals[0]) / (hi - lo)
    return (10**avg_log_diff - 1) * 100


def bd_psnr(
    anchor: RDCurve,
    test: RDCurve,
    interp: Interpolation = Interpolation.MonotonePCHIP,
) -> float:
    """Average PSNR gap of `test` over `anchor` across the common log-rate range."""
    span_anchor = (anchor.log_rates[0], anchor.log_rates[-1])
    span_test = (test.log_rates[0], test.log_rates[-1])
    lo, hi = _common_range(span_anchor, span_test)
    integrals = []
    for curve in (anchor, test):
        fitted = fit(curve.log_rates, curve.psnrs, interp)
        integrals.append(integrate_fit(fitted, curve.log_rates, lo, hi))
    return (integrals[1] - integrals[0]) / (hi - lo)


def interpolate_rate_at(
    curve: RDCurve,
    psnr: float,
    interp: Interpolation = Interpolation.MonotonePCHIP,
) -> float:
    lo, hi = curve.psnr_span()
    if not lo <= psnr <= hi:
        raise OutOfRange(f"PSNR {psnr} lies outside the curve's span [{lo}, {hi}]")
    fitted = fit(curve.psnrs, curve.log_rates, interp)
    return float(10 ** fitted(psnr))
