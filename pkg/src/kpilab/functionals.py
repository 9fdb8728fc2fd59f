"""Conserved quantities and norms of KP-I.

Grid versions take a :class:`Field2D` (or its :class:`SpectralField`) on a
periodic box; quadratic integrals are evaluated exactly by Parseval, cubic
and quartic ones on a twice zero-padded grid, which integrates products of
up to four band-limited factors without aliasing.  Separable versions act on
:class:`SeparableSum` and are exact up to one-dimensional quadrature error.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import separable as sep
from .spectral import (
    MEAN_TOL,
    Field2D,
    SpectralField,
    abs_dx,
    dx,
    dx_inv,
    dy,
    l2_norm_spectral,
    padded_samples,
    to_spectral,
)


class DegenerateRatioError(ValueError):
    """A factor on the right of the Sobolev inequality vanishes."""


# weights of the seven integrals making up the third conservation law
F_COEFFICIENTS = {
    "uxx_sq": 1.5,
    "uy_sq": 5.0,
    "inv2_uyy_sq": 5.0 / 6.0,
    "u2_inv2_uyy": -5.0 / 6.0,
    "u_inv_uy_sq": -5.0 / 6.0,
    "u2_uxx": 5.0 / 4.0,
    "u4": 5.0 / 24.0,
}


def _spec(u) -> SpectralField:
    return u if isinstance(u, SpectralField) else to_spectral(u)


def _samples(f: SpectralField) -> tuple[np.ndarray, float]:
    return padded_samples(f, 2, 1)


# ---------------------------------------------------------------------------
# grid functionals
# ---------------------------------------------------------------------------


def mass(u) -> float:
    """``N(u) = int u^2``."""
    return l2_norm_spectral(_spec(u)) ** 2


def energy(u, mean_tol: float = MEAN_TOL) -> float:
    """``E(u) = 1/2 int (u_x)^2 + (d_x^{-1} u_y)^2 - u^3 / 3``."""
    return energy_parts(u, mean_tol)["total"]


def energy_parts(u, mean_tol: float = MEAN_TOL) -> dict[str, float]:
    f = _spec(u)
    ux = l2_norm_spectral(dx(f)) ** 2
    nl = l2_norm_spectral(dx_inv(dy(f), 1, mean_tol)) ** 2
    v, w = _samples(f)
    cube = float(np.sum(v**3)) * w
    return {"ux_sq": ux, "inv_uy_sq": nl, "u3": cube, "total": 0.5 * (ux + nl - cube / 3.0)}


def f_breakdown(u, mean_tol: float = MEAN_TOL) -> dict[str, float]:
    """The seven unweighted integrals of the third conservation law.

    Keys follow :data:`F_COEFFICIENTS`; ``f_functional`` is their weighted sum.
    """
    f = _spec(u)
    uxx = dx(f, 2)
    uy = dy(f)
    inv2 = dx_inv(dy(f, 2), 2, mean_tol)
    inv1 = dx_inv(uy, 1, mean_tol)
    v, w = _samples(f)
    vxx, _ = _samples(uxx)
    vinv2, _ = _samples(inv2)
    vinv1, _ = _samples(inv1)
    v2 = v * v
    return {
        "uxx_sq": l2_norm_spectral(uxx) ** 2,
        "uy_sq": l2_norm_spectral(uy) ** 2,
        "inv2_uyy_sq": l2_norm_spectral(inv2) ** 2,
        "u2_inv2_uyy": float(np.sum(v2 * vinv2)) * w,
        "u_inv_uy_sq": float(np.sum(v * vinv1**2)) * w,
        "u2_uxx": float(np.sum(v2 * vxx)) * w,
        "u4": float(np.sum(v2 * v2)) * w,
    }


def f_from_breakdown(parts: dict[str, float]) -> float:
    return float(sum(F_COEFFICIENTS[k] * parts[k] for k in F_COEFFICIENTS))


def f_functional(u, mean_tol: float = MEAN_TOL) -> float:
    return f_from_breakdown(f_breakdown(u, mean_tol))


def x_norm(u, mean_tol: float = MEAN_TOL) -> float:
    """``||u|| + ||u_x|| + ||d_x^{-1} u_y||`` (energy space)."""
    f = _spec(u)
    return l2_norm_spectral(f) + l2_norm_spectral(dx(f)) + l2_norm_spectral(dx_inv(dy(f), 1, mean_tol))


def z_norm(u, mean_tol: float = MEAN_TOL) -> float:
    """``||u|| + ||u_xx|| + ||d_x^{-2} u_yy||``."""
    f = _spec(u)
    return (
        l2_norm_spectral(f)
        + l2_norm_spectral(dx(f, 2))
        + l2_norm_spectral(dx_inv(dy(f, 2), 2, mean_tol))
    )


def ys_norm(u, s: float, mean_tol: float = MEAN_TOL) -> float:
    """``||u|| + || |D_x|^s u || + ||d_x^{-1} u_y||``."""
    f = _spec(u)
    return (
        l2_norm_spectral(f)
        + l2_norm_spectral(abs_dx(f, s))
        + l2_norm_spectral(dx_inv(dy(f), 1, mean_tol))
    )


def lp_norm(u, p: float) -> float:
    """``L^p`` norm from the twice-refined band-limited samples."""
    f = _spec(u)
    if p == 2:
        return l2_norm_spectral(f)
    v, w = _samples(f)
    return float(np.sum(np.abs(v) ** p) * w) ** (1.0 / p)


def sobolev_exponents(p: float) -> tuple[float, float, float]:
    """Powers of ``||u||``, ``||u_x||`` and ``||d_x^{-1} u_y||`` bounding
    ``||u||_{L^p}``."""
    return ((6.0 - p) / (2.0 * p), (p - 2.0) / p, (p - 2.0) / (2.0 * p))


def sobolev_ratio(u, p: float, mean_tol: float = MEAN_TOL) -> float:
    """``||u||_{L^p}`` divided by the anisotropic interpolation product.

    For ``p = 2`` both sides are ``||u||_{L2}`` and the ratio is 1 exactly.
    """
    if not 2.0 <= p <= 6.0:
        raise ValueError("p must lie in [2, 6]")
    f = _spec(u)
    n0 = l2_norm_spectral(f)
    if p == 2:
        if n0 == 0.0:
            raise DegenerateRatioError("zero field")
        return n0 / n0
    n1 = l2_norm_spectral(dx(f))
    n2 = l2_norm_spectral(dx_inv(dy(f), 1, mean_tol))
    if min(n0, n1, n2) == 0.0:
        raise DegenerateRatioError(f"vanishing factor: |u|={n0:.3e}, |u_x|={n1:.3e}, |d^-1 u_y|={n2:.3e}")
    e0, e1, e2 = sobolev_exponents(p)
    return lp_norm(f, p) / (n0**e0 * n1**e1 * n2**e2)


@dataclass
class Diagnostics:
    t: float
    n_mass: float
    energy: float
    f_value: float
    x_norm: float
    z_norm: float
    components: dict = field(default_factory=dict)

    def __post_init__(self):
        vals = [self.n_mass, self.energy, self.f_value, self.x_norm, self.z_norm, *self.components.values()]
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("non-finite diagnostic")

    def row(self) -> dict:
        d = asdict(self)
        comps = d.pop("components")
        d.update({k: comps[k] for k in sorted(comps)})
        return d


def diagnostics(u, t: float = 0.0, mean_tol: float = MEAN_TOL) -> Diagnostics:
    f = _spec(u)
    e = energy_parts(f, mean_tol)
    fb = f_breakdown(f, mean_tol)
    comps = {f"E_{k}": v for k, v in e.items() if k != "total"}
    comps.update({f"F_{k}": v for k, v in fb.items()})
    return Diagnostics(
        t=t,
        n_mass=mass(f),
        energy=e["total"],
        f_value=f_from_breakdown(fb),
        x_norm=x_norm(f, mean_tol),
        z_norm=z_norm(f, mean_tol),
        components=comps,
    )


# ---------------------------------------------------------------------------
# separable functionals (large lambda, no grid)
# ---------------------------------------------------------------------------


def _inv_uy(u: sep.SeparableSum) -> sep.SeparableSum:
    return sep.apply_x(sep.AntiDeriv(1, expand=False), u.dy())


def _inv2_uyy(u: sep.SeparableSum) -> sep.SeparableSum:
    return sep.apply_x(sep.AntiDeriv(2, expand=False), u.dy(2))


def mass_separable(u: sep.SeparableSum) -> float:
    return sep.l2_norm_squared(u)


def energy_separable(u: sep.SeparableSum) -> dict[str, float]:
    u = u.merged()
    ux = sep.l2_norm_squared(u.dx())
    nl = sep.l2_norm_squared(_inv_uy(u))
    cube = sep.integrate(sep.product(sep.product(u, u).merged(), u))
    return {"ux_sq": ux, "inv_uy_sq": nl, "u3": cube, "total": 0.5 * (ux + nl - cube / 3.0)}


def f_breakdown_separable(u: sep.SeparableSum) -> dict[str, float]:
    u = u.merged()
    uxx = u.dx(2).merged()
    inv2 = _inv2_uyy(u).merged()
    inv1 = _inv_uy(u).merged()
    u2 = sep.product(u, u).merged()
    return {
        "uxx_sq": sep.l2_norm_squared(uxx),
        "uy_sq": sep.l2_norm_squared(u.dy()),
        "inv2_uyy_sq": sep.l2_norm_squared(inv2),
        "u2_inv2_uyy": sep.integrate(sep.product(u2, inv2)),
        "u_inv_uy_sq": sep.integrate(sep.product(u, sep.product(inv1, inv1).merged())),
        "u2_uxx": sep.integrate(sep.product(u2, uxx)),
        "u4": sep.integrate(sep.product(u2, u2)),
    }


def x_norm_separable(u: sep.SeparableSum) -> float:
    return sep.l2_norm(u) + sep.l2_norm(u.dx()) + sep.l2_norm(_inv_uy(u))


def z_norm_separable(u: sep.SeparableSum) -> float:
    return sep.l2_norm(u) + sep.l2_norm(u.dx(2)) + sep.l2_norm(_inv2_uyy(u))
