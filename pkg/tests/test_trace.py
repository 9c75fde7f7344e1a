import math

import numpy as np
import pytest

from inertiafb.trace import CSV_COLUMNS, Trace, csv_equal_ignoring_time


def small_trace():
    t = Trace(meta={"solver": "iista", "tau": 1e6, "note": "smoke",
                    "L0": 1.0, "phi_init": 3.5})
    rng = np.random.default_rng(0)
    for k in range(5):
        t.append(k=k, time_s=0.01 * k, f=3.5 - k, phi=3.5 - k,
                 h=-rng.uniform(), delta_k=float("nan"), d_k=rng.uniform(),
                 alpha_k=0.5, beta_k=0.0, L_or_gamma=2.0,
                 lambda_k=float("nan"), inner_iters=k + 1, backtracks=0,
                 psi=-1.0, x_step_norm=rng.uniform(),
                 y_step_norm=0.1, prox_branch="gap")
    return t


class TestRoundTrip:
    def test_rows_and_meta_survive(self, tmp_path):
        t = small_trace()
        path = tmp_path / "trace.csv"
        t.write_csv(path)
        back = Trace.read_csv(path)
        assert len(back) == len(t)
        assert back.meta["solver"] == "iista"
        assert back.meta["tau"] == 1e6
        assert back.meta["note"] == "smoke"
        assert back.meta["phi_init"] == 3.5
        for a, b in zip(t.rows, back.rows):
            for col in CSV_COLUMNS:
                va, vb = a[col], b[col]
                if isinstance(va, float) and math.isnan(va):
                    assert math.isnan(vb)
                else:
                    assert va == vb, col

    def test_float_serialization_is_exact(self, tmp_path):
        t = Trace()
        val = 1.0 / 3.0 + 1e-17
        t.append(time_s=0.0, f=val, phi=val, h=0.0, delta_k=0.0, d_k=0.0,
                 alpha_k=val, beta_k=0.0, L_or_gamma=1.0, lambda_k=1.0,
                 inner_iters=0, backtracks=0, psi=0.0, x_step_norm=0.0)
        path = tmp_path / "t.csv"
        t.write_csv(path)
        assert Trace.read_csv(path).rows[0]["f"] == val

    def test_extra_fields_not_serialized(self, tmp_path):
        t = small_trace()
        path = tmp_path / "trace.csv"
        t.write_csv(path)
        header = [l for l in path.read_text().splitlines()
                  if not l.startswith("#")][0]
        assert header.split(",") == CSV_COLUMNS
        assert "y_step_norm" not in header
        assert "prox_branch" not in header

    def test_int_columns_read_as_int(self, tmp_path):
        t = small_trace()
        path = tmp_path / "trace.csv"
        t.write_csv(path)
        row = Trace.read_csv(path).rows[2]
        assert isinstance(row["k"], int)
        assert isinstance(row["inner_iters"], int)
        assert row["inner_iters"] == 3


class TestRelGap:
    def test_column_appended_when_f_star_given(self, tmp_path):
        t = small_trace()
        path = tmp_path / "trace.csv"
        t.write_csv(path, f_star=0.5)
        back = Trace.read_csv(path)
        for orig, row in zip(t.rows, back.rows):
            assert row["rel_gap"] == pytest.approx(
                (orig["f"] - 0.5) / 0.5, rel=1e-15)

    def test_column_absent_by_default(self, tmp_path):
        t = small_trace()
        path = tmp_path / "trace.csv"
        t.write_csv(path)
        assert "rel_gap" not in path.read_text()


class TestHelpers:
    def test_append_autonumbers(self):
        t = Trace()
        t.append(f=1.0)
        t.append(f=2.0)
        assert [r["k"] for r in t.rows] == [0, 1]

    def test_column_fills_nan_for_missing(self):
        t = Trace()
        t.append(f=1.0)
        assert math.isnan(t.column("lambda_k")[0])
        assert t.column("f") == [1.0]

    def test_x_final_not_serialized(self, tmp_path):
        t = small_trace()
        t.x_final = np.ones(3)
        path = tmp_path / "trace.csv"
        t.write_csv(path)
        assert Trace.read_csv(path).x_final is None


class TestCsvEqualIgnoringTime:
    def test_equal_up_to_timing(self, tmp_path):
        a, b = small_trace(), small_trace()
        for row in b.rows:
            row["time_s"] += 17.0
        pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
        a.write_csv(pa)
        b.write_csv(pb)
        assert csv_equal_ignoring_time(pa, pb)

    def test_detects_value_difference(self, tmp_path):
        a, b = small_trace(), small_trace()
        b.rows[3]["f"] += 1e-12
        pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
        a.write_csv(pa)
        b.write_csv(pb)
        assert not csv_equal_ignoring_time(pa, pb)
