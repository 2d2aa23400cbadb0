import csv
import math

import numpy as np
import pytest

from helpers import load_json
from semithermo.errors import PreconditionError
from semithermo.multifractal import (
    affine_defect,
    hd_of_measure,
    lyapunov_at,
    spectrum_row,
    spectrum_table,
    temperature,
)
from semithermo.thermo import TOL_T, bowen_root, estimate_pressure

LOG2 = math.log(2)
Q_GRID = [0, 0.25, 0.5, 0.75, 1]


@pytest.fixture(scope="module")
def h_pm2(pm2):
    return bowen_root(pm2, 1.0, 8).h


@pytest.fixture(scope="module")
def table_pm2(pm2):
    return spectrum_table(pm2, 1.0, 0.8, Q_GRID, 8)


class TestTemperature:
    def test_z2_affine(self, z2):
        assert temperature(z2, 1.0, 0.5, 0.25, 8) == pytest.approx(0.75, abs=1e-6)

    @pytest.mark.parametrize("t", [0.6, 1.2])
    def test_endpoints(self, pm2, h_pm2, t):
        assert abs(temperature(pm2, 1.0, t, 1.0, 8)) <= 2 * TOL_T
        assert temperature(pm2, 1.0, t, 0.0, 8) == pytest.approx(h_pm2, abs=2 * TOL_T)

    def test_residual(self, pm2):
        T, res = temperature(pm2, 1.0, 0.8, 0.5, 8, with_residual=True)
        direct = estimate_pressure(pm2, 1.0, T + 0.4, 8) - 0.5 * estimate_pressure(pm2, 1.0, 0.8, 8)
        assert res == pytest.approx(abs(direct))
        assert res <= 2e-3

    def test_q_outside_unit_interval(self, z2):
        with pytest.raises(PreconditionError):
            temperature(z2, 1.0, 0.5, 1.5, 4)


class TestSpectrumRow:
    def test_z2_closed_form(self, z2):
        row = spectrum_row(z2, 1.0, 0.5, 0.5, 8)
        assert row.T == pytest.approx(0.5, abs=1e-6)
        assert row.chi == pytest.approx(LOG2, abs=1e-9)
        assert row.alpha == pytest.approx(1.0, abs=1e-6)
        assert row.dim == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("q", [0.25, 0.75])
    def test_at_bowen_root(self, pm2, h_pm2, q):
        row = spectrum_row(pm2, 1.0, h_pm2, q, 8)
        assert row.alpha == pytest.approx(h_pm2, abs=2e-3)
        assert row.dim == pytest.approx(h_pm2, abs=2e-3)

    def test_golden_depth_ten(self, pm2):
        gold = load_json("spectrum_golden.json")
        row = spectrum_row(pm2, complex(*gold["xi"]), gold["t"], gold["q"], 8)
        assert row.dim == pytest.approx(gold["dim"], abs=0.02)


class TestSpectrumTable:
    def test_z2_degenerate(self, z2):
        table = spectrum_table(z2, 1.0, 0.5, Q_GRID, 8)
        assert table.degenerate
        assert all(abs(r.dim - 1) <= 1e-3 for r in table.rows)
        assert table.violations == []

    def test_pm2_not_degenerate(self, table_pm2):
        assert not table_pm2.degenerate
        assert table_pm2.chi_spread > 1e-2
        assert table_pm2.violations == []

    def test_rows_sorted_with_valid_dims(self, table_pm2):
        assert [r.q for r in table_pm2.rows] == Q_GRID
        assert all(r.chi > 0 and 0 <= r.dim <= 2 for r in table_pm2.rows)
        assert all(r.residual <= 2e-3 for r in table_pm2.rows)

    def test_q1_row_matches_measure_dimension(self, pm2, table_pm2):
        assert table_pm2.rows[-1].dim == pytest.approx(hd_of_measure(pm2, 1.0, 0.8, 8), abs=5e-3)

    def test_missing_endpoint(self, z2):
        with pytest.raises(PreconditionError):
            spectrum_table(z2, 1.0, 0.5, [0, 0.5], 4)

    def test_csv(self, table_pm2, tmp_path):
        table_pm2.to_csv(tmp_path / "s.csv")
        lines = (tmp_path / "s.csv").read_text().splitlines()
        meta = {l[2:].split("=")[0] for l in lines if l.startswith("#")}
        assert {"t", "n", "h_ref", "seed"} <= meta
        rows = list(csv.reader(l for l in lines if not l.startswith("#")))
        assert rows[0] == ["q", "T", "chi", "alpha", "dim"]
        assert len(rows) == 1 + len(Q_GRID)


class TestMeasureDimension:
    def test_z2(self, z2):
        assert hd_of_measure(z2, 1.0, 0.3, 8) == pytest.approx(1.0, abs=1e-9)

    def test_at_bowen_root(self, pm2, h_pm2):
        assert hd_of_measure(pm2, 1.0, h_pm2, 8) == pytest.approx(h_pm2, abs=2e-3)

    def test_below_h_elsewhere(self, pm2, h_pm2):
        assert hd_of_measure(pm2, 1.0, 0.8, 8) < h_pm2


class TestDegeneracyEquivalence:
    GRID = list(np.linspace(0.2, 1.8, 5))

    def test_z2_both_true(self, z2):
        assert affine_defect(z2, 1.0, self.GRID, 8) < 1e-3
        assert spectrum_table(z2, 1.0, 0.8, Q_GRID, 8).degenerate

    def test_pm2_both_false(self, pm2, table_pm2):
        assert affine_defect(pm2, 1.0, self.GRID, 8) >= 1e-3
        assert not table_pm2.degenerate


def test_one_sided_chi_near_zero(z2):
    assert lyapunov_at(z2, 1.0, 0.0, 6) == pytest.approx(LOG2, abs=1e-9)
