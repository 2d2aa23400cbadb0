import csv
import math

import numpy as np
import pytest

from semithermo.errors import GridTooCoarse, NoSignChange, PreconditionError
from semithermo.skew import enumerate_tree
from semithermo.thermo import (
    TAU_MONO,
    TOL_T,
    bowen_root,
    decreasing_root,
    estimate_pressure,
    lyapunov_from_slope,
    pressure_curve,
    pressure_increments,
    shape_violations,
    variance_from_curvature,
)

LOG2 = math.log(2)


@pytest.fixture(scope="module")
def h_pm2(pm2):
    return bowen_root(pm2, 1.0, 8).h


class TestEstimatePressure:
    def test_z2_closed_form(self, z2):
        assert estimate_pressure(z2, 1.0, 0.5, 10) == pytest.approx(0.5 * LOG2, abs=1e-12)

    def test_node_counting(self, pm2):
        assert estimate_pressure(pm2, 1.0, 0.0, 8) == pytest.approx(math.log(4), abs=1e-14)

    def test_chebyshev_at_one(self, cheb):
        assert abs(estimate_pressure(cheb, 1.5, 1.0, 12)) < 0.05

    def test_spread_reported(self, pm2):
        est = pressure_increments(pm2, 1.0, 1.0, 8)
        assert len(est.increments) == 3
        assert est.spread == pytest.approx(max(est.increments) - min(est.increments))

    def test_automatic_pruning_above_depth_eight(self, pm2):
        full = pressure_increments(pm2, 1.0, 1.2, 9, prune=None)
        assert abs(full.value - estimate_pressure(pm2, 1.0, 1.2, 8)) < 5e-3


class TestPressureCurve:
    def test_z2_affine(self, z2):
        # both base points on the unit circle, which is the Julia set
        curve = pressure_curve(z2, 1.0, -1.0, [0, 0.5, 1, 1.5], 8)
        assert curve.estimates == pytest.approx([LOG2, 0.5 * LOG2, 0, -0.5 * LOG2], abs=1e-12)
        assert curve.cross_check_gap < 1e-10
        assert curve.ok

    def test_pm2_base_point_gap(self, pm2):
        curve = pressure_curve(pm2, 1.0, 1.3, [0.5, 1.0, 1.5], 8)
        assert curve.cross_check_gap <= 5e-3

    @pytest.mark.parametrize("name", ["z2", "chebyshev", "z2pm2"])
    def test_gap_shrinks_with_depth(self, corpus, name):
        spec = corpus[name]
        grid = [0.5, 1.0, 1.5]
        g6 = pressure_curve(spec, 1.0, 1.3, grid, 6).cross_check_gap
        g8 = pressure_curve(spec, 1.0, 1.3, grid, 8).cross_check_gap
        assert g8 <= g6 + 1e-4

    def test_negative_t_rejected(self, z2):
        with pytest.raises(PreconditionError):
            pressure_curve(z2, 1.0, 1.3, [-0.1, 0.5], 4)

    def test_lipschitz_sandwich(self, pm2):
        grid = list(np.linspace(0, 2.4, 7))
        curve = pressure_curve(pm2, 1.0, 1.3, grid, 7)
        lip = enumerate_tree(pm2, 1.0, 7).max_step_log_sderiv
        for (t1, p1), (t2, p2) in zip(zip(grid, curve.estimates), zip(grid[1:], curve.estimates[1:])):
            assert -lip * (t2 - t1) <= p2 - p1 <= TAU_MONO

    def test_csv(self, z2, tmp_path):
        curve = pressure_curve(z2, 1.0, 1.3, [0, 1], 4)
        path = tmp_path / "p.csv"
        curve.to_csv(path)
        rows = [r for r in csv.reader(l for l in path.open() if not l.startswith("#"))]
        assert rows[0] == ["t", "pressure", "increment_spread", "depth"]
        assert float(rows[1][1]) == curve.estimates[0]


class TestShapeViolations:
    def test_flags_increase(self):
        mono, conv = shape_violations([0, 1, 2], [1.0, 1.5, 0.0])
        assert mono == [(0.0, 1.0)]
        assert conv == [1.0]

    def test_clean_curve(self):
        t = np.linspace(0, 2, 9)
        mono, conv = shape_violations(t, np.exp(-t))
        assert mono == [] and conv == []


class TestBowenRoot:
    def test_z2(self, z2):
        assert bowen_root(z2, 1.0, 8).h == pytest.approx(1.0, abs=1e-6)

    def test_chebyshev(self, cheb):
        assert bowen_root(cheb, 1.5, 12).h == pytest.approx(1.0, abs=0.02)

    def test_pm2_bounds(self, h_pm2):
        assert 1.0 < h_pm2 < 2.0

    def test_bracket_and_residual(self, pm2):
        res = bowen_root(pm2, 1.0, 8)
        lo, hi = res.bracket
        assert lo <= res.h <= hi and hi - lo <= TOL_T
        assert estimate_pressure(pm2, 1.0, lo, 8) > 0 > estimate_pressure(pm2, 1.0, hi, 8)
        assert res.residual < 1e-3

    def test_stable_in_depth(self, pm2, h_pm2):
        assert abs(bowen_root(pm2, 1.0, 7).h - h_pm2) < 5 * TOL_T

    def test_csv(self, z2, tmp_path):
        bowen_root(z2, 1.0, 6).to_csv(tmp_path / "b.csv")
        header, row = list(csv.reader((tmp_path / "b.csv").open()))
        assert header == ["h", "bracket_lo", "bracket_hi", "residual", "depth"]
        assert float(row[0]) == pytest.approx(1.0, abs=1e-6)


class TestDecreasingRoot:
    def test_doubling(self):
        root, (lo, hi), _, _ = decreasing_root(lambda t: 10 - t, 0, 2, 1e-6)
        assert root == pytest.approx(10)
        assert lo <= 10 <= hi

    def test_no_sign_change(self):
        with pytest.raises(NoSignChange):
            decreasing_root(lambda t: 1.0, 0, 2, 1e-3)

    def test_negative_start(self):
        with pytest.raises(NoSignChange):
            decreasing_root(lambda t: -1.0 - t, 0, 2, 1e-3)


class TestDerivatives:
    def test_z2_slope(self, z2):
        curve = pressure_curve(z2, 1.0, 1.3, [0.4, 0.5, 0.6], 6)
        assert lyapunov_from_slope(curve, 0.5) == pytest.approx(LOG2, abs=1e-12)

    def test_pm2_slope_stable(self, pm2, h_pm2):
        grid = [h_pm2 - 0.05, h_pm2, h_pm2 + 0.05]
        c7 = pressure_curve(pm2, 1.0, 1.3, grid, 7)
        c8 = pressure_curve(pm2, 1.0, 1.3, grid, 8)
        a, b = lyapunov_from_slope(c7, h_pm2), lyapunov_from_slope(c8, h_pm2)
        assert a > 0 and b > 0
        assert abs(a - b) <= 0.02 * b

    def test_one_point_grid(self, z2):
        curve = pressure_curve(z2, 1.0, 1.3, [0.5], 4)
        with pytest.raises(GridTooCoarse):
            lyapunov_from_slope(curve, 0.5)

    def test_endpoint_needs_neighbours(self, z2):
        curve = pressure_curve(z2, 1.0, 1.3, [0.4, 0.5, 0.6], 4)
        with pytest.raises(GridTooCoarse):
            lyapunov_from_slope(curve, 0.6)

    def test_z2_variance(self, z2):
        curve = pressure_curve(z2, 1.0, 1.3, [0.4, 0.5, 0.6], 6)
        assert abs(variance_from_curvature(curve, 0.5)) < 1e-6

    def test_pm2_variance_convex(self, pm2, h_pm2):
        grid = [h_pm2 - 0.1, h_pm2, h_pm2 + 0.1]
        curve = pressure_curve(pm2, 1.0, 1.3, grid, 8)
        assert variance_from_curvature(curve, h_pm2) >= -1e-3

    def test_nonuniform_grid(self, z2):
        curve = pressure_curve(z2, 1.0, 1.3, [0.4, 0.5, 0.8], 4)
        with pytest.raises(GridTooCoarse):
            variance_from_curvature(curve, 0.5)
