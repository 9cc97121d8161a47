import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rmv.report import ReportError, fit_rate, format_value, write_manifest, write_table

NS = np.array([8, 32, 128, 512])


class TestFitRate:
    def test_noiseless_half(self):
        r = fit_rate(NS, 3.0 * NS**-0.5, 0.01 * 3.0 * NS**-0.5)
        assert r.slope == pytest.approx(-0.5, abs=1e-12)
        assert r.dof == 2 and r.weighted

    def test_noiseless_high_dimension_regime(self):
        # N^{-2/d} with d = 5
        r = fit_rate(NS, 0.7 * NS ** (-2 / 5))
        assert r.slope == pytest.approx(-0.4, abs=1e-12)
        assert r.ci_high - r.ci_low == pytest.approx(0.0, abs=1e-10)

    def test_matches_weighted_polyfit(self):
        rng = np.random.default_rng(0)
        v = NS**-0.5 * np.exp(0.1 * rng.normal(size=4))
        se = v * np.array([0.05, 0.1, 0.2, 0.08])
        r = fit_rate(NS, v, se)
        # polyfit scales residuals by w, i.e. w = 1 / sigma of log v
        slope, icpt = np.polyfit(np.log(NS), np.log(v), 1, w=v / se)
        assert r.slope == pytest.approx(slope, abs=1e-12)
        assert r.intercept == pytest.approx(icpt, abs=1e-12)

    def test_residual_scaling_when_overdispersed(self):
        v = NS**-0.5 * np.array([1.0, 1.3, 0.8, 1.2])
        tight = fit_rate(NS, v, 1e-4 * v)
        # residual term dominates the tiny declared errors
        x = np.log(NS)
        res = np.log(v) - tight.intercept - tight.slope * x
        se_res = np.sqrt(np.sum(res**2) / 2 / np.sum((x - x.mean()) ** 2))
        assert tight.stderr == pytest.approx(se_res, rel=1e-10)

    def test_coverage_calibration(self):
        rng = np.random.default_rng(2024)
        hits = 0
        for _ in range(200):
            true = 2.0 * NS**-0.5
            v = true * (1 + 0.05 * rng.normal(size=4))
            hits += fit_rate(NS, v, 0.05 * true).contains(-0.5)
        assert hits / 200 >= 0.95

    @pytest.mark.parametrize("bad", [[1.0, 0.0, 1.0, 1.0], [1.0, -2.0, 1.0, 1.0], [1.0, np.nan, 1.0, 1.0]])
    def test_nonpositive_rejected(self, bad):
        with pytest.raises(ReportError):
            fit_rate(NS, bad)

    def test_too_few_rows(self):
        with pytest.raises(ReportError):
            fit_rate([1, 2], [1.0, 0.5])

    def test_unweighted_when_no_stderr(self):
        r = fit_rate(NS, NS**-1.0, [0.0] * 4)
        assert not r.weighted and r.slope == pytest.approx(-1.0, abs=1e-12)


class TestCsv:
    def test_format(self):
        assert format_value(0.1) == "0.1"
        assert format_value(np.float64(1 / 3)) == repr(1 / 3)
        assert format_value(np.int64(7)) == "7"
        assert format_value(True) == "true"
        assert format_value(None) == ""

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(allow_nan=False, allow_infinity=False), min_size=1, max_size=20))
    def test_roundtrip_exact(self, xs):
        assert [float(format_value(x)) for x in xs] == xs

    def test_bytes(self, tmp_path):
        p = write_table(tmp_path / "a.csv", ["N", "error"], [{"N": 8, "error": 0.25}, [32, 1e-300]])
        assert p.read_bytes() == b"N,error\n8,0.25\n32,1e-300\n"
        q = write_table(tmp_path / "b.csv", ["N", "error"], [{"N": 8, "error": 0.25}, [32, 1e-300]])
        assert p.read_bytes() == q.read_bytes()

    def test_row_length_checked(self, tmp_path):
        with pytest.raises(ReportError):
            write_table(tmp_path / "a.csv", ["a", "b"], [[1]])


def test_manifest(tmp_path):
    f = write_table(tmp_path / "t.csv", ["x"], [[1.5]])
    man = write_manifest(tmp_path / "manifest.json", kind="chaos", config_hash="ab", seed=3,
                         checks={"soft": {"passed": False, "hard": False}, "hard": {"passed": True, "hard": True}},
                         files=[f], extra={"slope": np.float64(-0.5)})
    on_disk = json.loads((tmp_path / "manifest.json").read_text())
    assert on_disk == man
    assert not man["passed"] and not man["hard_failure"]
    assert len(man["files"]["t.csv"]) == 64 and man["slope"] == -0.5
    assert "time" not in json.dumps(man)
