"""Approximate KP-I solutions, their residual and the four scale estimates.

``u_ap = -A psi(x) phi_lam(y) cos(Phi) - B psi_tilde(x) phi_tilde(y)`` with
``A = lam^(-1-(alpha+beta)/2)``, ``B = omega / lam`` and the phase
``Phi = 4 lam^3 t + lam x + sqrt(3) lam^2 y + omega t``.  The carrier is
split as ``cos(Phi) = cos(lam x + a_t) cos(kappa y) - sin(lam x + a_t)
sin(kappa y)`` so that every piece is a product of one x-factor and one
y-factor.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .bumps import ApproxParams, make_bumps
from .separable import (
    AntiDeriv,
    Deriv,
    SeparableSum,
    Trig,
    apply_x,
    apply_y,
    l2_norm,
    product,
)


class ParameterMismatchError(ValueError):
    """Two parameter sets that should differ only in omega differ elsewhere."""


@dataclass(frozen=True)
class Phase:
    """``Phi(t, x, y) = 4 lam^3 t + lam x + sqrt(3) lam^2 y + omega t``."""

    lam: float
    omega: float
    t: float
    shift: bool = True  # include the omega t phase shift

    def __post_init__(self):
        if abs(self.omega) > 1.0:
            raise ValueError("|omega| must not exceed 1")

    @property
    def time_part(self) -> float:
        return 4.0 * self.lam**3 * self.t + (self.omega * self.t if self.shift else 0.0)

    @property
    def frequency(self) -> float:
        """``d Phi / d t``."""
        return 4.0 * self.lam**3 + (self.omega if self.shift else 0.0)

    def x_carrier(self, kind: str) -> Trig:
        return Trig(kind, self.lam, self.time_part)

    def y_carrier(self, kind: str) -> Trig:
        return Trig(kind, math.sqrt(3.0) * self.lam**2, 0.0)


def modulated(p: ApproxParams, phase: Phase, coef: float, x_parts, y_parts, kind="cos") -> SeparableSum:
    """``coef * X(x) Y(y) cos(Phi)`` (or ``sin``) as two separable terms."""
    cx, sx = phase.x_carrier("cos"), phase.x_carrier("sin")
    cy, sy = phase.y_carrier("cos"), phase.y_carrier("sin")
    if kind == "cos":
        return SeparableSum.from_parts(coef, x_parts, y_parts, [cx], [cy]) + SeparableSum.from_parts(
            -coef, x_parts, y_parts, [sx], [sy]
        )
    return SeparableSum.from_parts(coef, x_parts, y_parts, [sx], [cy]) + SeparableSum.from_parts(
        coef, x_parts, y_parts, [cx], [sy]
    )


@dataclass(frozen=True)
class ApproxSolution:
    params: ApproxParams
    t: float
    high: SeparableSum
    low: SeparableSum
    phase: Phase

    @property
    def total(self) -> SeparableSum:
        return self.high + self.low

    @property
    def amplitude(self) -> float:
        """``lam^(-1-(alpha+beta)/2)``."""
        return self.params.lam ** (-1.0 - self.params.mid_exponent)

    def time_derivative(self) -> SeparableSum:
        """``d_t u_ap = A (4 lam^3 + omega) psi phi_lam sin(Phi)``."""
        b = make_bumps(self.params)
        return modulated(
            self.params,
            self.phase,
            self.amplitude * self.phase.frequency,
            [(b.psi, 0)],
            [(b.phi_lam, 0)],
            "sin",
        )


def build_u_ap(p: ApproxParams, t: float = 0.0, phase_shift: bool = True) -> ApproxSolution:
    b = make_bumps(p)
    phase = Phase(p.lam, p.omega, t, phase_shift)
    amp = p.lam ** (-1.0 - p.mid_exponent)
    high = modulated(p, phase, -amp, [(b.psi, 0)], [(b.phi_lam, 0)], "cos")
    if p.omega != 0.0:
        low = SeparableSum.from_parts(-p.omega / p.lam, [(b.psi_tilde, 0)], [(b.phi_tilde, 0)])
    else:
        low = SeparableSum()
    return ApproxSolution(p, t, high, low, phase)


def linear_part(u: SeparableSum, kp_sign: float = 1.0) -> SeparableSum:
    """``(d_x^3 - kp_sign d_x^{-1} d_y^2) u`` with the antiderivative expanded."""
    cube = apply_x(Deriv(3), u)
    nonlocal_ = apply_x(AntiDeriv(1, expand=True), apply_y(Deriv(2), u))
    return cube - kp_sign * nonlocal_


def residual(
    p: ApproxParams,
    t: float = 0.0,
    phase_shift: bool = True,
    kp_sign: float = 1.0,
) -> SeparableSum:
    """``G = (d_t + d_x^3 - d_x^{-1} d_y^2) u_ap + u_ap d_x u_ap``, merged.

    ``phase_shift=False`` drops ``omega t`` from the phase (removing the
    pairing of the omega-linear time derivative with the high-low product);
    ``kp_sign=-1`` flips the nonlocal sign (KP-II).
    """
    ua = build_u_ap(p, t, phase_shift)
    u = ua.total
    g = ua.time_derivative() + linear_part(u, kp_sign) + product(u, u.dx())
    return g.merged()


def omega_pairing(p: ApproxParams, t: float = 0.0, phase_shift: bool = True) -> SeparableSum:
    """The omega-linear part of ``d_t u_ap`` plus the high-low products of
    ``u_ap d_x u_ap``.

    With the phase shift these two cancel to leading order and the sum is
    ``o(1/lam)``; without it the time derivative loses its omega term and the
    high-low product survives at size ``|omega| / lam``.
    """
    ua = build_u_ap(p, t, phase_shift)
    b = make_bumps(p)
    pair = product(ua.high, ua.low.dx()) + product(ua.low, ua.high.dx())
    if phase_shift:
        pair = pair + modulated(p, ua.phase, ua.amplitude * p.omega, [(b.psi, 0)], [(b.phi_lam, 0)], "sin")
    return pair.merged()


def estimate_I(p: ApproxParams, t: float = 0.0, **kw) -> float:
    """``||G(t)||_{L2}``."""
    return l2_norm(residual(p, t, **kw))


def estimate_II(p: ApproxParams, t: float = 0.0, part: str = "total") -> float:
    """``||d_x^{-1} d_y u_ap||_{L2}``."""
    u = getattr(build_u_ap(p, t), part)
    return l2_norm(apply_x(AntiDeriv(1, expand=False), apply_y(Deriv(1), u)))


def estimate_III(p: ApproxParams, t: float = 0.0, part: str = "total") -> float:
    """``||d_x^{-2} d_y^2 u_ap||_{L2}``."""
    u = getattr(build_u_ap(p, t), part)
    return l2_norm(apply_x(AntiDeriv(2, expand=False), apply_y(Deriv(2), u)))


def _same_but_omega(p1: ApproxParams, p2: ApproxParams):
    for f in p1.__dataclass_fields__:
        if f != "omega" and getattr(p1, f) != getattr(p2, f):
            raise ParameterMismatchError(f"parameters differ in {f}")


def estimate_IV(p1: ApproxParams, p2: ApproxParams, t: float = 0.0) -> float:
    """``||d_x (u_ap(omega) - u_ap(omega'))(t)||_{L2}``."""
    _same_but_omega(p1, p2)
    d = build_u_ap(p1, t).total - build_u_ap(p2, t).total
    return l2_norm(d.dx())


def envelope_norm(p: ApproxParams) -> float:
    """``||lam^(-(alpha+beta)/2) psi phi_lam||_{L2}``."""
    b = make_bumps(p)
    s = SeparableSum.from_parts(p.lam ** (-p.mid_exponent), [(b.psi, 0)], [(b.phi_lam, 0)])
    return l2_norm(s)


def divergence_prediction(p1: ApproxParams, p2: ApproxParams, t: float) -> float:
    """Leading part of ``||d_x(u_1 - u_2)(t)||``: the norm of
    ``lam^(-(alpha+beta)/2) psi phi_lam (sin(Phi_1) - sin(Phi_2))``, which
    equals ``2 |sin(t (omega - omega') / 2)|`` times the norm of the envelope
    modulated by ``cos`` at the mean phase."""
    _same_but_omega(p1, p2)
    b = make_bumps(p1)
    mean = Phase(p1.lam, 0.5 * (p1.omega + p2.omega), t)
    carrier = modulated(p1, mean, p1.lam ** (-p1.mid_exponent), [(b.psi, 0)], [(b.phi_lam, 0)], "cos")
    return 2.0 * abs(math.sin(0.5 * t * (p1.omega - p2.omega))) * l2_norm(carrier)


# ---------------------------------------------------------------------------
# cancellation ledger
# ---------------------------------------------------------------------------


def ledger_terms(p: ApproxParams, t: float = 0.0) -> dict[str, tuple[SeparableSum, float]]:
    """Named remainders of the residual computation with their predicted
    decay exponents.

    Each entry is ``name -> (separable remainder, exponent)``; the claim is
    ``||remainder|| <= C lam^exponent`` and every exponent is below -1.
    """
    a, bta = p.alpha, p.beta
    mid = p.mid_exponent
    lam = p.lam
    ua = build_u_ap(p, t)
    b = make_bumps(p)
    ph = ua.phase
    amp = ua.amplitude
    psi, phl = b.psi, b.phi_lam
    terms: dict[str, tuple[SeparableSum, float]] = {}

    # low-frequency part under the linear operator
    if p.omega != 0.0:
        terms["low_linear"] = (linear_part(ua.low).merged(), -1.0 + mid + max(a - 2 * bta, -3 * a))

    # quadratic term minus its leading high-low product
    u = ua.total
    quad = product(u, u.dx()) + modulated(p, ph, p.omega * amp, [(psi, 0)], [(phl, 0)], "sin")
    terms["quadratic_remainder"] = (quad.merged(), -2.0 - 0.5 * (a - bta))

    def y2(x_parts, kind, coef):
        return apply_y(Deriv(2), modulated(p, ph, coef, x_parts, [(phl, 0)], kind))

    # the four y-Leibniz remainders of the expanded nonlocal term
    k2 = 3.0 * lam**4
    s_a = y2([(psi, 0)], "sin", amp / lam) + modulated(p, ph, k2 * amp / lam, [(psi, 0)], [(phl, 0)], "sin")
    terms["leibniz_y_sin"] = (s_a.merged(), -bta)
    s_b = y2([(psi, 1)], "cos", amp / lam**2) + modulated(p, ph, k2 * amp / lam**2, [(psi, 1)], [(phl, 0)], "cos")
    terms["leibniz_y_cos"] = (s_b.merged(), -1.0 - a - bta)
    terms["leibniz_y_second"] = (y2([(psi, 2)], "sin", amp / lam**3).merged(), -2.0 * a)
    rem = apply_x(AntiDeriv(1, expand=False), modulated(p, ph, 1.0, [(psi, 3)], [(phl, 0)], "sin"))
    terms["leibniz_y_remainder"] = (apply_y(Deriv(2), amp / lam**3 * rem).merged(), -2.0 * a)

    # x-Leibniz remainder of the cubic derivative
    hi = ua.high
    cube = apply_x(Deriv(3), hi) + modulated(p, ph, amp * lam**3, [(psi, 0)], [(phl, 0)], "sin") - modulated(
        p, ph, 3.0 * amp * lam**2, [(psi, 1)], [(phl, 0)], "cos"
    )
    terms["leibniz_x_cube"] = (cube.merged(), -2.0 * a)

    # central identity: (d_x^3 - d_x^{-1} d_y^2) u_ap = -4 lam^(2-mid) psi phi sin(Phi) + o(1/lam)
    central = linear_part(u) + modulated(p, ph, 4.0 * lam ** (2.0 - mid), [(psi, 0)], [(phl, 0)], "sin")
    terms["central_identity"] = (central.merged(), -1.0 - p.delta)

    terms["residual"] = (residual(p, t), -1.0 - p.delta)
    return terms


def mar_terms(p: ApproxParams, t: float = 0.0) -> dict[str, tuple[float, float]]:
    """One-dimensional bounds on ``d_x^{-2}`` of the modulated x-profile.

    ``mar1``: ``||d_x^{-2}(psi cos)||`` against ``lam^(-2+alpha/2)``;
    ``mar2``: the same minus its leading term ``-lam^-2 psi cos`` against
    ``lam^(-3-alpha/2)``.
    """
    from .separable import Factor1D, gram, opaque_antiderivative

    b = make_bumps(p)
    ph = Phase(p.lam, p.omega, t)
    _, f = Factor1D.make("x", [(b.psi, 0)], [ph.x_carrier("cos")])
    opaque = opaque_antiderivative("x", f, 2)
    G = gram([opaque, f])
    n1 = math.sqrt(G[0, 0])
    lead = -(p.lam**-2)
    n2 = math.sqrt(max(G[0, 0] + 2 * lead * G[0, 1] + lead**2 * G[1, 1], 0.0))
    return {"mar1": (n1, -2.0 + 0.5 * p.alpha), "mar2": (n2, -3.0 - 0.5 * p.alpha)}


def write_ledger_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["term_name", "lambda", "norm", "norm_times_lambda_power", "pass"])
        for r in rows:
            w.writerow([r["term_name"], f"{r['lambda']:.17g}", f"{r['norm']:.17g}",
                        f"{r['norm_times_lambda_power']:.17g}", "pass" if r["pass"] else "fail"])


def cancellation_ledger(lams, eps: float = 0.1, omega: float = 1.0, t: float = 0.5, tol: float = 0.05):
    """Rows ``term_name, lambda, norm, norm * lam, pass`` and per-term fits.

    A term passes when its fitted log-log slope is below both -1 (so
    ``norm * lam`` is bounded and decaying) and the predicted exponent plus
    ``tol``.
    """
    norms: dict[str, list[float]] = {}
    expo: dict[str, float] = {}
    for lam in lams:
        p = ApproxParams.from_epsilon(lam, eps, omega=omega)
        for name, (s, e) in ledger_terms(p, t).items():
            norms.setdefault(name, []).append(l2_norm(s))
            expo[name] = e
        for name, (v, e) in mar_terms(p, t).items():
            norms.setdefault(name, []).append(v)
            expo[name] = e
    rows, fits = [], {}
    logl = np.log(np.asarray(lams, dtype=float))
    for name, vals in norms.items():
        slope = float(np.polyfit(logl, np.log(vals), 1)[0])
        ok = slope < -1.0 and slope <= expo[name] + tol
        fits[name] = {"slope": slope, "predicted": expo[name], "pass": ok}
        for lam, v in zip(lams, vals):
            rows.append({"term_name": name, "lambda": lam, "norm": v,
                         "norm_times_lambda_power": v * lam, "pass": ok})
    return rows, fits
