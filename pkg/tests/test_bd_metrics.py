import math

import numpy as np
import pytest
from scipy import integrate, interpolate

from piccam import Interpolation
from piccam.bd_metrics import (
    RDCurve,
    RDPoint,
    bd_psnr,
    bd_rate,
    interpolate_rate_at,
    load_curve,
    save_curve,
    upper_envelope,
)
from piccam.errors import (
    BadRDPoint,
    InfinitePsnrPoint,
    NonMonotoneCurve,
    NoOverlap,
    OutOfRange,
    TooFewPoints,
)
from tests import ClassWithTempDir

ANCHOR_PAIRS = [(0.01, 30), (0.02, 33), (0.05, 36), (0.12, 39)]
TEST_RATE_FACTORS = [0.8, 0.7, 0.9, 0.85]


@pytest.fixture
def anchor():
    return RDCurve.from_pairs(ANCHOR_PAIRS)


@pytest.fixture
def test_curve():
    return RDCurve.from_pairs(
        (bpp * factor, psnr) for (bpp, psnr), factor in zip(ANCHOR_PAIRS, TEST_RATE_FACTORS)
    )


def trapezoid_bd_rate(anchor: RDCurve, test: RDCurve, num_samples=1_000_000) -> float:
    lo = max(anchor.psnrs[0], test.psnrs[0])
    hi = min(anchor.psnrs[-1], test.psnrs[-1])
    grid = np.linspace(lo, hi, num_samples)
    integrals = [
        integrate.trapezoid(
            interpolate.PchipInterpolator(curve.psnrs, curve.log_rates)(grid), grid
        )
        for curve in (anchor, test)
    ]
    return (10 ** ((integrals[1] - integrals[0]) / (hi - lo)) - 1) * 100


def trapezoid_bd_psnr(anchor: RDCurve, test: RDCurve, num_samples=1_000_000) -> float:
    lo = max(anchor.log_rates[0], test.log_rates[0])
    hi = min(anchor.log_rates[-1], test.log_rates[-1])
    grid = np.linspace(lo, hi, num_samples)
    integrals = [
        integrate.trapezoid(
            interpolate.PchipInterpolator(curve.log_rates, curve.psnrs)(grid), grid
        )
        for curve in (anchor, test)
    ]
    return (integrals[1] - integrals[0]) / (hi - lo)


class TestRDCurve:
    def test_points_sorted_by_psnr(self):
        curve = RDCurve.from_pairs(reversed(ANCHOR_PAIRS))
        assert list(curve.psnrs) == [30, 33, 36, 39]

    def test_too_few_points_fails(self):
        with pytest.raises(TooFewPoints):
            RDCurve.from_pairs(ANCHOR_PAIRS[:3])

    def test_non_monotone_fails(self):
        with pytest.raises(NonMonotoneCurve):
            RDCurve.from_pairs([(0.01, 30), (0.03, 33), (0.02, 36), (0.12, 39)])
        with pytest.raises(NonMonotoneCurve):
            RDCurve.from_pairs([(0.01, 30), (0.02, 30), (0.05, 36), (0.12, 39)])

    def test_infinite_psnr_rejected(self):
        with pytest.raises(InfinitePsnrPoint):
            RDPoint(0.1, math.inf)

    def test_bad_rate_rejected(self):
        with pytest.raises(BadRDPoint):
            RDPoint(0.0, 30)
        with pytest.raises(BadRDPoint):
            RDPoint(0.1, math.nan)


class TestCurveFiles(ClassWithTempDir):
    def test_save_and_load(self, anchor):
        fname = self.temp_file("anchor.json")
        save_curve(anchor, fname)
        assert load_curve(fname) == anchor

    @pytest.mark.parametrize(
        "content", ["not json", '{"bpp": 0.1}', '[{"bpp": 0.1}]', '[{"bpp": "x", "psnr": 30}]']
    )
    def test_malformed_file_fails(self, content):
        fname = self.temp_file("malformed.json")
        fname.write_text(content)
        with pytest.raises(BadRDPoint):
            load_curve(fname)


class TestUpperEnvelope:
    def test_dominated_points_dropped(self):
        points = [RDPoint(0.1, 30), RDPoint(0.2, 29), RDPoint(0.3, 35), RDPoint(0.25, 36)]
        assert upper_envelope(points) == [RDPoint(0.1, 30), RDPoint(0.25, 36)]


@pytest.mark.parametrize("interp", list(Interpolation))
class TestBDRate:
    def test_identical_curves(self, anchor, interp):
        assert bd_rate(anchor, anchor, interp) == pytest.approx(0, abs=1e-9)

    def test_doubled_rates(self, anchor, interp):
        assert bd_rate(anchor, anchor.scaled(rate_factor=2), interp) == pytest.approx(
            100, abs=0.05
        )

    def test_halved_rates(self, anchor, interp):
        assert bd_rate(anchor, anchor.scaled(rate_factor=0.5), interp) == pytest.approx(
            -50, abs=0.05
        )

    def test_antisymmetry(self, anchor, test_curve, interp):
        forward = bd_rate(anchor, test_curve, interp)
        backward = bd_rate(test_curve, anchor, interp)
        assert (1 + forward / 100) * (1 + backward / 100) == pytest.approx(1, rel=1e-9)

    def test_scale_covariance(self, anchor, test_curve, interp):
        base = bd_rate(anchor, test_curve, interp)
        scaled = bd_rate(anchor, test_curve.scaled(rate_factor=1.7), interp)
        assert scaled == pytest.approx((1.7 * (1 + base / 100) - 1) * 100, rel=1e-6)

    def test_window_mode(self, anchor, interp):
        doubled = anchor.scaled(rate_factor=2)
        assert bd_rate(anchor, doubled, interp, window=(31, 38)) == pytest.approx(
            100, abs=0.05
        )
        with pytest.raises(NoOverlap):
            bd_rate(anchor, doubled, interp, window=(40, 45))


class TestBDRateOracles:
    def test_matches_trapezoid_oracle(self, anchor, test_curve):
        result = bd_rate(anchor, test_curve, Interpolation.MonotonePCHIP)
        assert result == pytest.approx(trapezoid_bd_rate(anchor, test_curve), abs=0.5)
        assert result < 0

    def test_no_overlap_fails(self, anchor):
        shifted = anchor.scaled(psnr_offset=20)
        with pytest.raises(NoOverlap):
            bd_rate(anchor, shifted)

    def test_collinear_point_is_stable(self):
        pairs = [(10 ** (-2 + 0.1 * (psnr - 30)), psnr) for psnr in (30, 33, 36, 39)]
        curve = RDCurve.from_pairs(pairs)
        denser = RDCurve.from_pairs(pairs + [(10 ** (-2 + 0.1 * 4.5), 34.5)])
        test = RDCurve.from_pairs(
            (bpp * f, psnr) for (bpp, psnr), f in zip(pairs, TEST_RATE_FACTORS)
        )
        assert abs(bd_rate(curve, test) - bd_rate(denser, test)) < 0.05


class TestBDPSNR:
    def test_identical_curves(self, anchor):
        assert bd_psnr(anchor, anchor) == pytest.approx(0, abs=1e-9)

    def test_one_db_offset(self, anchor):
        assert bd_psnr(anchor, anchor.scaled(psnr_offset=1.0)) == pytest.approx(1.0, abs=1e-6)

    def test_matches_trapezoid_oracle(self, anchor):
        rng = np.random.default_rng(2)
        perturbed = RDCurve.from_pairs(
            (bpp * rng.uniform(0.8, 1.2), psnr + rng.uniform(-0.3, 0.3))
            for bpp, psnr in ANCHOR_PAIRS
        )
        assert bd_psnr(anchor, perturbed) == pytest.approx(
            trapezoid_bd_psnr(anchor, perturbed), abs=0.01
        )


class TestInterpolateRate:
    def test_knots_are_reproduced(self, anchor):
        for bpp, psnr in ANCHOR_PAIRS:
            assert interpolate_rate_at(anchor, psnr) == pytest.approx(bpp, rel=1e-12)

    def test_monotone_interpolant_stays_between_knots(self, anchor):
        for lo, hi in zip(ANCHOR_PAIRS, ANCHOR_PAIRS[1:]):
            mid = (lo[1] + hi[1]) / 2
            assert lo[0] <= interpolate_rate_at(anchor, mid) <= hi[0]

    def test_mid_span_matches_dense_linear_refinement(self):
        def log_rate(psnr):
            return -2 + 0.1 * (psnr - 30) + 0.001 * (psnr - 30) ** 2

        curve = RDCurve.from_pairs((10 ** log_rate(p), p) for p in (30, 33, 36, 39))
        dense = np.linspace(30, 39, 10_001)
        expected = 10 ** np.interp(34.5, dense, log_rate(dense))
        assert interpolate_rate_at(curve, 34.5) == pytest.approx(expected, rel=0.02)

    def test_out_of_range_fails(self, anchor):
        with pytest.raises(OutOfRange):
            interpolate_rate_at(anchor, 45)
