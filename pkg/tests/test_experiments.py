import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kpilab import experiments as ex
from kpilab.spectral import to_spectral


class TestFit:
    @given(st.floats(-3, 3), st.floats(-5, 5))
    def test_recovers_power_law(self, k, c):
        lams = [8, 16, 32, 64, 128]
        s, i, r = ex.fit_slope(lams, [math.exp(c) * lam**k for lam in lams])
        assert s == pytest.approx(k, abs=1e-9)
        assert i == pytest.approx(c, abs=1e-8)
        assert r <= 1e-9

    def test_needs_four_points(self):
        with pytest.raises(ex.TooFewPointsError):
            ex.fit_slope([1, 2, 3], [1, 2, 3])

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            ex.fit_slope([1, 2, 3, 4], [1, 0, 3, 4])

    def test_lambda_list_checks(self):
        with pytest.raises(ex.TooFewPointsError):
            ex.run_residual_scan(lambdas=(8, 16, 32))
        with pytest.raises(ValueError):
            ex.run_initial_closeness(lambdas=(16, 8, 32, 64))


class TestVerdicts:
    lams = [8, 16, 32, 64]

    def test_pass_and_fail(self):
        vals = [lam**-1.3 for lam in self.lams]
        assert ex.ScanResult("x", "e", self.lams, vals, -1.2).verdict == ex.PASS
        assert ex.ScanResult("x", "e", self.lams, vals, -1.4).verdict == ex.FAIL
        assert ex.ScanResult("x", "e", self.lams, vals, -1.4, ">=").verdict == ex.PASS

    def test_noisy_fit_is_inconclusive(self):
        vals = [1.0, 100.0, 0.01, 50.0]
        assert ex.ScanResult("x", "e", self.lams, vals, 10.0).verdict == ex.INCONCLUSIVE

    def test_refit_reproduces(self):
        r = ex.ScanResult("x", "e", self.lams, [lam**-1.1 for lam in self.lams], -1.0)
        d = r.to_dict()
        again = ex.ScanResult(**{**d, "verdict": ""})
        assert (again.slope, again.verdict) == (r.slope, r.verdict)

    def test_line_format(self):
        r = ex.ScanResult("residual-scan", "(I)", self.lams, [lam**-1.3 for lam in self.lams], -1.18)
        assert r.line().endswith("-> pass") and "slope=-1.3000" in r.line()


class TestLinearChecks:
    def test_zero_velocity(self):
        r = ex.run_zero_velocity()
        assert r.passed and len(r.rows) == 1024

    def test_plane_wave_identity_at_zero_time(self):
        r = ex.run_plane_wave_orbit(t=0.0)
        assert r.passed
        assert [row["weight"] for row in r.rows] == [1.0, -2.0, 1.0]


class TestSeparableRunners:
    def test_moments(self):
        r = ex.run_moments(lambdas=(2, 4), gammas=(0.0, 1.0))
        assert r.passed and len(r.rows) == 4

    def test_initial_closeness(self):
        r = ex.run_initial_closeness(lambdas=(8, 16, 32, 64))
        assert r.passed and r.slope < 0

    def test_divergence_single_lambda(self):
        check, decay = ex.run_divergence(lam=32, t_samples=(0.5,), lambdas=None)
        assert decay is None
        assert {row["t"] for row in check.rows} == {0.5, 0.0}


class TestSobolevAudit:
    def test_random_fields_have_zero_x_mean(self):
        rng = np.random.default_rng(3)
        u = ex.random_smooth_field(rng, 64)
        c = to_spectral(u).coeffs
        assert np.max(np.abs(c[:, 0])) <= 1e-12 * np.max(np.abs(c))

    def test_draw_independent_of_resolution(self):
        a = ex.random_smooth_field(np.random.default_rng(5), 64)
        b = ex.random_smooth_field(np.random.default_rng(5), 128)
        # only the removed sampling mean depends on the grid
        assert np.max(np.abs(a.values - b.values[::2, ::2])) <= 2e-3 * np.max(np.abs(a.values))

    def test_small_audit(self):
        res, two = ex.run_sobolev_audit(draws=5, sizes=(64, 128, 256, 512))
        assert two.passed
        assert [r.estimate for r in res] == ["(malak) p=3", "(malak) p=4", "(malak) p=6"]
        assert all(r.passed for r in res)


def _fake(experiment, estimate, verdict=ex.PASS):
    return ex.CheckResult(experiment, estimate, [{"a": 1.0}], verdict)


class TestManifest:
    def everything(self):
        out = [_fake(exp, est) for est, exp in ex.COVERAGE.items()]
        return out

    def test_complete(self):
        cov = ex.coverage_manifest(self.everything())
        assert set(cov) == set(ex.COVERAGE)
        assert all(v["pass"] for v in cov.values())

    def test_missing_entry_fails(self):
        rs = [r for r in self.everything() if r.experiment != "f-bound"]
        cov = ex.coverage_manifest(rs)
        assert not cov["F<=C lam^2"]["pass"]

    def test_failing_result_propagates(self):
        rs = self.everything() + [_fake("gronwall", "(edno)", ex.FAIL)]
        cov = ex.coverage_manifest(rs)
        assert not cov["(edno)"]["pass"] and cov["(zero)"]["pass"]

    def test_write_results(self, tmp_path):
        rs = self.everything() + [ex.ScanResult("residual-scan", "(I)", [8, 16, 32, 64], [1, 0.5, 0.25, 0.125], -0.9)]
        path = ex.write_results(rs, tmp_path, {"seed": 0}, {"series": [{"t": 0.0, "v": 1.0}]})
        data = json.loads(path.read_text())
        assert data["code_version"] and data["created"]
        assert len(data["results"]) == len(rs)
        for entry in data["results"]:
            assert (tmp_path / entry["csv"]).exists()
        assert (tmp_path / "series.csv").exists()
        csv_text = (tmp_path / data["results"][-1]["csv"]).read_text().splitlines()
        assert csv_text[0] == "lambda,value" and csv_text[1] == "8,1"

    def test_csv_is_deterministic(self, tmp_path):
        r = ex.run_moments(lambdas=(2,), gammas=(0.0,))
        r.write_csv(tmp_path / "a.csv")
        ex.run_moments(lambdas=(2,), gammas=(0.0,)).write_csv(tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
