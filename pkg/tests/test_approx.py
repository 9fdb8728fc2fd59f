import math

import numpy as np
import pytest

from kpilab.approx import (
    ParameterMismatchError,
    Phase,
    build_u_ap,
    cancellation_ledger,
    divergence_prediction,
    envelope_norm,
    estimate_I,
    estimate_II,
    estimate_III,
    estimate_IV,
    ledger_terms,
    linear_part,
    mar_terms,
    omega_pairing,
    residual,
    write_ledger_csv,
)
from kpilab.bumps import ApproxParams, make_bumps
from kpilab.separable import l2_norm

LAMS = [8, 16, 32, 64]


def P(lam, omega=1.0, **kw):
    return ApproxParams.from_epsilon(lam, 0.1, omega=omega, **kw)


def slope(lams, vals):
    return float(np.polyfit(np.log(lams), np.log(vals), 1)[0])


class TestPhase:
    def test_frequency(self):
        ph = Phase(2.0, 0.5, 0.3)
        assert ph.frequency == 32.5
        assert ph.time_part == pytest.approx(32.5 * 0.3)
        assert Phase(2.0, 0.5, 0.3, shift=False).time_part == pytest.approx(32 * 0.3)

    def test_omega_bound(self):
        with pytest.raises(ValueError):
            Phase(2.0, 1.5, 0.0)


class TestBuild:
    def test_zero_omega_has_no_low_part(self):
        assert len(build_u_ap(P(8, 0.0)).low) == 0

    def test_initial_phase(self, rng):
        p = P(4.0)
        b = make_bumps(p)
        u = build_u_ap(p, 0.0).high
        x = rng.uniform(*b.psi.support, 300)
        y = rng.uniform(*b.phi_lam.support, 300)
        amp = p.lam ** (-1 - p.mid_exponent)
        want = -amp * b.psi(x) * b.phi_lam(y) * np.cos(p.lam * x + p.kappa * y)
        assert np.allclose(u.evaluate(x, y), want, atol=1e-14)

    def test_phase_at_positive_time(self, rng):
        p = P(4.0, 0.5)
        b = make_bumps(p)
        t = 0.7
        x = rng.uniform(*b.psi.support, 100)
        y = rng.uniform(*b.phi_lam.support, 100)
        amp = p.lam ** (-1 - p.mid_exponent)
        ph = 4 * p.lam**3 * t + p.lam * x + p.kappa * y + p.omega * t
        want = -amp * b.psi(x) * b.phi_lam(y) * np.cos(ph)
        assert np.allclose(build_u_ap(p, t).high.evaluate(x, y), want, atol=1e-12)

    def test_high_part_slope(self):
        vals = [l2_norm(build_u_ap(P(lam)).high) for lam in LAMS]
        assert slope(LAMS, vals) == pytest.approx(-1.0, abs=0.02)

    def test_time_derivative_matches_difference_quotient(self, rng):
        p = P(4.0)
        t, h = 0.3, 1e-6
        b = make_bumps(p)
        x = rng.uniform(*b.psi.support, 50)
        y = rng.uniform(*b.phi_lam.support, 50)
        fd = (build_u_ap(p, t + h).total.evaluate(x, y) - build_u_ap(p, t - h).total.evaluate(x, y)) / (2 * h)
        dt = build_u_ap(p, t).time_derivative().evaluate(x, y)
        assert np.allclose(dt, fd, atol=1e-5 * np.max(np.abs(dt)))


class TestResidual:
    def test_central_term_cancels_symbolically(self):
        # the psi' phi cos(Phi) pieces of d_x^3 and d_x^{-1} d_y^2 are equal
        p = P(16)
        b = make_bumps(p)
        lin = linear_part(build_u_ap(p).high)
        amp = p.lam ** (-1 - p.mid_exponent)

        def psi1_terms(s):
            return [t for t in s.terms if t.fx.parts == ((b.psi, 1),) and t.fy.parts == ((b.phi_lam, 0),)]

        raw = psi1_terms(lin)
        assert max(abs(t.coef) for t in raw) == pytest.approx(3 * p.lam**2 * amp, rel=1e-12)
        assert psi1_terms(lin.merged()) == []

    def test_central_identity(self):
        vals = [l2_norm(ledger_terms(P(lam), 0.5)["central_identity"][0]) * lam for lam in LAMS]
        assert slope(LAMS, vals) < 0

    def test_slope(self):
        vals = [estimate_I(P(lam), 0.5) for lam in [16, 32, 64, 128]]
        p = P(8)
        assert slope([16, 32, 64, 128], vals) <= -1 - p.delta + 0.05

    def test_fixture_value(self):
        # recorded separable Gram value at lam = 8, t = 0
        assert estimate_I(P(8), 0.0) == pytest.approx(55.6, rel=0.01)

    def test_scaled_residual_bounded(self):
        vals = [estimate_I(P(lam), 0.0) * lam ** (1 + P(lam).delta) for lam in [32, 64, 128]]
        assert max(vals) / min(vals) < 1.2

    def test_omega_dependence_bounded_by_omega_terms(self):
        p0, p1 = P(32, 0.0), P(32, 1.0)
        g0, g1 = estimate_I(p0, 0.5), estimate_I(p1, 0.5)
        u1 = build_u_ap(p1, 0.5)
        bound = l2_norm(residual(p1, 0.5) - residual(p0, 0.5))
        assert abs(g1 - g0) <= bound * (1 + 1e-9)
        assert bound <= 10 * (l2_norm(u1.low.dx()) + l2_norm(u1.low)) * 32

    def test_kp2_control_degrades(self):
        vals = [estimate_I(P(lam), 0.5, kp_sign=-1.0) for lam in LAMS]
        assert slope(LAMS, vals) >= -1.05

    def test_pairing_ab(self):
        on = [l2_norm(omega_pairing(P(lam), 0.5, True)) for lam in LAMS]
        off = [l2_norm(omega_pairing(P(lam), 0.5, False)) for lam in LAMS]
        assert slope(LAMS, on) < -1.5
        assert slope(LAMS, off) >= -1.05


class TestEstimates:
    def test_II_bounded(self):
        vals = [estimate_II(P(lam), 0.5) for lam in LAMS]
        assert slope(LAMS, vals) <= 0.05

    def test_II_low_part_slope(self):
        p = P(8)
        vals = [estimate_II(P(lam), 0.0, "low") for lam in LAMS]
        want = -1 + p.mid_exponent + p.alpha - p.beta
        assert want < 0
        assert slope(LAMS, vals) == pytest.approx(want, abs=0.05)

    def test_II_time_independent(self):
        p = P(16)
        assert estimate_II(p, 0.0) == pytest.approx(estimate_II(p, 0.9), rel=1e-3)

    def test_III(self):
        vals = [estimate_III(P(lam), 0.5) for lam in LAMS]
        assert slope(LAMS, vals) <= 1.05
        low = [estimate_III(P(lam), 0.5, "low") for lam in LAMS]
        p = P(8)
        assert slope(LAMS, low) == pytest.approx(-1 + p.mid_exponent + 2 * p.alpha - 2 * p.beta, abs=0.05)

    def test_mar1(self):
        vals = [mar_terms(P(lam))["mar1"][0] for lam in LAMS]
        p = P(8)
        assert slope(LAMS, vals) <= -2 + p.alpha / 2 + 0.05

    def test_IV_same_omega(self):
        assert estimate_IV(P(16, 0.5), P(16, 0.5), 0.7) == 0.0

    def test_IV_mismatch(self):
        with pytest.raises(ParameterMismatchError):
            estimate_IV(P(16, 1.0), P(32, -1.0), 0.5)

    def test_IV_initial_decay(self):
        vals = [estimate_IV(P(lam, 1.0), P(lam, -1.0), 0.0) for lam in LAMS]
        assert slope(LAMS, vals) < 0

    def test_IV_lower_bound(self):
        p1, p2 = P(64, 1.0), P(64, -1.0)
        val = estimate_IV(p1, p2, 0.5)
        c = envelope_norm(p1) / math.sqrt(2)
        assert val >= c * 2 * 0.5 * 0.9
        assert divergence_prediction(p1, p2, 0.5) == pytest.approx(val, rel=0.05)


class TestLedger:
    def test_every_term_decays_faster_than_inverse_lambda(self, tmp_path):
        rows, fits = cancellation_ledger([16, 32, 64, 128])
        assert set(fits) >= {"quadratic_remainder", "leibniz_y_sin", "leibniz_y_cos", "leibniz_y_second",
                             "leibniz_y_remainder", "leibniz_x_cube", "central_identity", "mar1", "mar2"}
        bad = {k: v for k, v in fits.items() if not v["pass"] and k not in ("mar1", "mar2")}
        assert not bad
        path = tmp_path / "ledger.csv"
        write_ledger_csv(rows, path)
        assert path.read_text().splitlines()[0] == "term_name,lambda,norm,norm_times_lambda_power,pass"
