"""Exact calculus on finite sums of products ``sum_i c_i f_i(x) g_i(y)``.

A one-dimensional factor is a product of profile derivatives (the
*envelope*) and of trigonometric carriers ``cos/sin(k s + theta)``.  Factors
are hashable and canonically ordered, so terms that are equal as functions
are recognized symbolically and merged before any quadrature.  This matters:
the residual of the approximate solution is the difference of terms of size
``lam^2`` whose exact cancellation leaves ``lam^(-1-delta)``.

Inner products expand the carriers into exponentials and reduce to integrals
``J(E, nu) = int E(s) exp(i nu s) ds`` of smooth compactly supported
envelopes.  ``J`` is taken as zero when ``|nu|`` exceeds the envelope
bandwidth (beyond which the Fourier transform is below 1e-15 relative) and is
otherwise evaluated with the trapezoid rule on a uniform grid resolving
``|nu|`` plus the bandwidth, which is spectrally accurate for such
integrands.
"""

from __future__ import annotations

import cmath
import json
import math
from collections import defaultdict
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .bumps import Antiderivative, Profile
from .spectral import Field2D, Grid1D, Grid2D, SpectralField

SAFETY = 0.75  # fraction of the Nyquist step used by trapezoid grids
CHUNK = 1 << 18
SNAP = 64.0  # merged coefficients below SNAP * eps * (largest contribution) are dropped


class SupportOverflowError(ValueError):
    """A factor's support does not fit inside the rendering box."""


# ---------------------------------------------------------------------------
# carriers
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class Trig:
    kind: str  # "cos" or "sin"
    k: float
    phase: float

    def value(self, s):
        arg = self.k * s + self.phase
        return np.cos(arg) if self.kind == "cos" else np.sin(arg)

    def derivative(self) -> tuple[float, "Trig"]:
        if self.kind == "cos":
            return -self.k, Trig("sin", self.k, self.phase)
        return self.k, Trig("cos", self.k, self.phase)

    def antiderivative(self) -> tuple[float, "Trig"]:
        if self.kind == "cos":
            return 1.0 / self.k, Trig("sin", self.k, self.phase)
        return -1.0 / self.k, Trig("cos", self.k, self.phase)

    def exponentials(self) -> list[tuple[complex, float]]:
        e = cmath.exp(1j * self.phase)
        if self.kind == "cos":
            return [(0.5 * e, self.k), (0.5 * e.conjugate(), -self.k)]
        return [(-0.5j * e, self.k), (0.5j * e.conjugate(), -self.k)]

    def normalized(self) -> tuple[float, "Trig | None"]:
        """Fold ``k <= 0`` into a sign and a nonnegative wavenumber; a zero
        wavenumber becomes a constant."""
        if self.k == 0.0:
            return (math.cos(self.phase) if self.kind == "cos" else math.sin(self.phase)), None
        if self.k < 0:
            if self.kind == "cos":
                return 1.0, Trig("cos", -self.k, -self.phase)
            return -1.0, Trig("sin", -self.k, -self.phase)
        return 1.0, self


def _trig_product(a: Trig, b: Trig) -> list[tuple[float, Trig]]:
    """Product-to-sum for two carriers."""
    kd, pd = a.k - b.k, a.phase - b.phase
    ks, ps = a.k + b.k, a.phase + b.phase
    if a.kind == "cos" and b.kind == "cos":
        return [(0.5, Trig("cos", kd, pd)), (0.5, Trig("cos", ks, ps))]
    if a.kind == "sin" and b.kind == "sin":
        return [(0.5, Trig("cos", kd, pd)), (-0.5, Trig("cos", ks, ps))]
    if a.kind == "cos":  # cos a sin b
        a, b = b, a
        kd, pd = -kd, -pd
    return [(0.5, Trig("sin", ks, ps)), (0.5, Trig("sin", kd, pd))]


# ---------------------------------------------------------------------------
# factors
# ---------------------------------------------------------------------------


def _part_key(part) -> tuple[str, int]:
    return (part[0].key, part[1])


@lru_cache(maxsize=None)
def _covers(a, b) -> bool:
    return isinstance(a, Profile) and isinstance(b, Profile) and a != b and a.covers(b)


def _absorb(parts: list) -> list | None:
    """Apply ``tilde * p = p`` when ``tilde`` is 1 on the support of ``p``.

    Returns ``None`` when the product vanishes identically (a derivative of
    the covering profile multiplies ``p``).
    """
    changed = True
    while changed:
        changed = False
        for i, (pa, oa) in enumerate(parts):
            for j, (pb, _) in enumerate(parts):
                if i != j and _covers(pa, pb):
                    if oa > 0:
                        return None
                    parts = parts[:i] + parts[i + 1 :]
                    changed = True
                    break
            if changed:
                break
    return parts


@dataclass(frozen=True)
class Factor1D:
    """``prod_j P_j^(o_j)(s) * prod_m trig_m(s)`` on one axis."""

    axis: str
    parts: tuple
    trigs: tuple = ()

    @staticmethod
    def make(axis: str, parts, trigs=()) -> tuple[float, "Factor1D | None"]:
        """Canonical factor and scalar prefactor; ``None`` for the zero function."""
        coef = 1.0
        clean = []
        for t in trigs:
            c, nt = t.normalized()
            coef *= c
            if nt is not None:
                clean.append(nt)
        parts = _absorb(list(parts))
        if parts is None or coef == 0.0:
            return 0.0, None
        if not parts:
            raise ValueError("a factor needs at least one compactly supported part")
        parts = tuple(sorted(parts, key=_part_key))
        return coef, Factor1D(axis, parts, tuple(sorted(clean)))

    @property
    def key(self) -> str:
        p = "*".join(f"{q.key}^({o})" for q, o in self.parts)
        t = "*".join(f"{tr.kind}({tr.k!r}s+{tr.phase!r})" for tr in self.trigs)
        return f"{self.axis}:{p}" + (f"*{t}" if t else "")

    def describe(self) -> dict:
        return {
            "axis": self.axis,
            "parts": [{"profile": q.key, "order": o} for q, o in self.parts],
            "trigs": [{"kind": tr.kind, "k": tr.k, "phase": tr.phase} for tr in self.trigs],
        }

    # -- geometry ---------------------------------------------------------
    @property
    def support(self) -> tuple[float, float]:
        lo = max(q.support[0] for q, _ in self.parts)
        hi = min(q.support[1] for q, _ in self.parts)
        return (lo, hi)

    @property
    def envelope(self) -> tuple:
        return self.parts

    def envelope_bandwidth(self) -> float:
        return float(sum(q.bandwidth(o) for q, o in self.parts))

    def bandwidth(self, order: int = 0) -> float:
        return self.envelope_bandwidth() + float(sum(abs(t.k) for t in self.trigs))

    # -- evaluation -------------------------------------------------------
    def envelope_value(self, s):
        s = np.asarray(s, dtype=float)
        out = np.ones_like(s)
        for q, o in self.parts:
            out = out * q.value(s, o)
        return out

    def value(self, s, order: int = 0):
        if order:
            s = np.asarray(s, dtype=float)
            total = np.zeros_like(s)
            for c, f in differentiate(self, order):
                total += c * f.value(s)
            return total
        out = self.envelope_value(s)
        for t in self.trigs:
            out = out * t.value(np.asarray(s, dtype=float))
        return out

    __call__ = value

    def exponentials(self) -> dict[float, complex]:
        acc = {0.0: 1.0 + 0.0j}
        for t in self.trigs:
            nxt: dict[float, complex] = defaultdict(complex)
            for nu, c in acc.items():
                for ct, kt in t.exponentials():
                    nxt[nu + kt] += c * ct
            acc = dict(nxt)
        return acc

    def single_trig_terms(self) -> list[tuple[float, "Factor1D"]]:
        """Rewrite with at most one carrier per factor (product-to-sum)."""
        terms = [(1.0, list(self.trigs[:1]))]
        for t in self.trigs[1:]:
            new = []
            for c, tr in terms:
                if not tr:
                    new.append((c, [t]))
                    continue
                for c2, t2 in _trig_product(tr[0], t):
                    new.append((c * c2, [t2]))
            terms = new
        out = []
        for c, tr in terms:
            c2, f = Factor1D.make(self.axis, self.parts, tr)
            if f is not None and c * c2 != 0.0:
                out.append((c * c2, f))
        return _merge_factor_terms(out)


def _merge_factor_terms(terms):
    acc: dict = {}
    order = []
    for c, f in terms:
        if f not in acc:
            acc[f] = 0.0
            order.append(f)
        acc[f] += c
    return [(acc[f], f) for f in order if acc[f] != 0.0]


def factor_product(a: Factor1D, b: Factor1D) -> tuple[float, Factor1D | None]:
    if a.axis != b.axis:
        raise ValueError("cannot multiply factors on different axes")
    return Factor1D.make(a.axis, a.parts + b.parts, a.trigs + b.trigs)


def derivative_terms(f: Factor1D) -> list[tuple[float, Factor1D]]:
    """Leibniz rule over profile parts and carriers."""
    out = []
    for i, (q, o) in enumerate(f.parts):
        parts = f.parts[:i] + ((q, o + 1),) + f.parts[i + 1 :]
        c, g = Factor1D.make(f.axis, parts, f.trigs)
        if g is not None:
            out.append((c, g))
    for i, t in enumerate(f.trigs):
        c0, nt = t.derivative()
        trigs = f.trigs[:i] + (nt,) + f.trigs[i + 1 :]
        c, g = Factor1D.make(f.axis, f.parts, trigs)
        if g is not None and c0 != 0.0:
            out.append((c0 * c, g))
    return _merge_factor_terms(out)


def differentiate(f: Factor1D, order: int) -> list[tuple[float, Factor1D]]:
    terms = [(1.0, f)]
    for _ in range(order):
        nxt = []
        for c, g in terms:
            nxt.extend((c * c2, h) for c2, h in derivative_terms(g))
        terms = _merge_factor_terms(nxt)
    return terms


@dataclass(frozen=True)
class FactorSum:
    """A fixed linear combination of factors used as an antiderivative
    integrand when a Leibniz expansion yields several terms."""

    terms: tuple

    @property
    def key(self) -> str:
        return "+".join(f"{c!r}*[{f.key}]" for c, f in self.terms)

    @property
    def support(self) -> tuple[float, float]:
        return (min(f.support[0] for _, f in self.terms), max(f.support[1] for _, f in self.terms))

    def bandwidth(self, order: int = 0) -> float:
        return max(f.bandwidth(order) for _, f in self.terms)

    def value(self, s, order: int = 0):
        s = np.asarray(s, dtype=float)
        out = np.zeros_like(s)
        for c, f in self.terms:
            out += c * f.value(s, order)
        return out


def opaque_antiderivative(axis: str, integrand, order: int) -> Factor1D:
    """Factor holding ``d^{-order}`` of ``integrand``; moments are checked now."""
    # d^{-1} d^{-n} g = d^{-(n+1)} g
    if isinstance(integrand, Factor1D) and not integrand.trigs and len(integrand.parts) == 1:
        q, o = integrand.parts[0]
        if isinstance(q, Antiderivative) and o == 0:
            integrand, order = q.integrand, q.order + order
    ad = Antiderivative(integrand, order)
    ad._table()
    return Factor1D(axis, ((ad, 0),), ())


def antiderivative_terms(f: Factor1D, expand: bool = True, steps: int = 3) -> list[tuple[float, Factor1D]]:
    """``d^{-1} f`` as a list of factors.

    With ``expand`` each single-carrier term ``E T`` is integrated by parts
    ``steps`` times, ``d^{-1}(E T) = sum_m (-1)^(m-1) E^(m-1) T_m
    + (-1)^steps d^{-1}(E^(steps) T_steps)``, where ``T_m`` is the m-th
    antiderivative of the carrier; the last integral is kept opaque.
    Non-oscillatory terms become opaque antiderivatives directly.
    """
    if not expand:
        return [(1.0, opaque_antiderivative(f.axis, f, 1))]
    out = []
    for c, g in f.single_trig_terms():
        if not g.trigs:
            out.append((c, opaque_antiderivative(g.axis, g, 1)))
            continue
        trig = g.trigs[0]
        env = Factor1D(g.axis, g.parts, ())
        env_derivs = [(1.0, env)]
        tc, tm = 1.0, trig
        for m in range(1, steps + 1):
            ca, tm = tm.antiderivative()
            tc *= ca
            sign = (-1.0) ** (m - 1)
            for ce, e in env_derivs:
                c2, h = Factor1D.make(g.axis, e.parts, (tm,))
                if h is not None:
                    out.append((c * sign * tc * ce * c2, h))
            nxt = []
            for ce, e in env_derivs:
                nxt.extend((ce * c3, h) for c3, h in derivative_terms(e))
            env_derivs = _merge_factor_terms(nxt)
        rem = []
        for ce, e in env_derivs:
            c2, h = Factor1D.make(g.axis, e.parts, (tm,))
            if h is not None:
                rem.append((ce * c2, h))
        if rem:
            sign = (-1.0) ** steps
            if len(rem) == 1:
                cr, h = rem[0]
                out.append((c * sign * tc * cr, opaque_antiderivative(g.axis, h, 1)))
            else:
                integrand = FactorSum(tuple(rem))
                out.append((c * sign * tc, opaque_antiderivative(g.axis, integrand, 1)))
    return _merge_factor_terms(out)


# ---------------------------------------------------------------------------
# one-dimensional operators
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Deriv:
    """``d^order`` along the axis."""

    order: int = 1

    def apply(self, f: Factor1D):
        return differentiate(f, self.order)


@dataclass(frozen=True)
class AntiDeriv:
    """``d^{-order}`` along the axis (integration from -infinity)."""

    order: int = 1
    expand: bool = True

    def apply(self, f: Factor1D):
        if not self.expand:
            return [(1.0, opaque_antiderivative(f.axis, f, self.order))]
        terms = [(1.0, f)]
        for _ in range(self.order):
            nxt = []
            for c, g in terms:
                nxt.extend((c * c2, h) for c2, h in antiderivative_terms(g, True))
            terms = _merge_factor_terms(nxt)
        return terms


@dataclass(frozen=True)
class MulProfile:
    """Multiplication by a profile derivative ``P^(order)``."""

    profile: object
    order: int = 0

    def apply(self, f: Factor1D):
        c, g = Factor1D.make(f.axis, f.parts + ((self.profile, self.order),), f.trigs)
        return [] if g is None else [(c, g)]


@dataclass(frozen=True)
class MulTrig:
    trig: Trig

    def apply(self, f: Factor1D):
        out = []
        c, g = Factor1D.make(f.axis, f.parts, f.trigs + (self.trig,))
        if g is not None:
            out.append((c, g))
        return out


# ---------------------------------------------------------------------------
# sums of products
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Term:
    coef: float
    fx: Factor1D
    fy: Factor1D


@dataclass(frozen=True)
class SeparableSum:
    terms: tuple = ()

    @staticmethod
    def single(coef: float, fx: Factor1D, fy: Factor1D) -> "SeparableSum":
        return SeparableSum((Term(coef, fx, fy),))

    @staticmethod
    def from_parts(coef, x_parts, y_parts, x_trigs=(), y_trigs=()) -> "SeparableSum":
        cx, fx = Factor1D.make("x", x_parts, x_trigs)
        cy, fy = Factor1D.make("y", y_parts, y_trigs)
        if fx is None or fy is None or coef * cx * cy == 0.0:
            return SeparableSum()
        return SeparableSum.single(coef * cx * cy, fx, fy)

    def __len__(self):
        return len(self.terms)

    def __add__(self, other: "SeparableSum") -> "SeparableSum":
        return SeparableSum(self.terms + other.terms)

    def __sub__(self, other: "SeparableSum") -> "SeparableSum":
        return self + (-1.0) * other

    def __neg__(self):
        return (-1.0) * self

    def __mul__(self, other):
        if isinstance(other, SeparableSum):
            return product(self, other)
        return SeparableSum(tuple(Term(t.coef * other, t.fx, t.fy) for t in self.terms))

    __rmul__ = __mul__

    def merged(self, snap: float = SNAP) -> "SeparableSum":
        """Combine terms with identical factor pairs.

        A merged coefficient is dropped when it is below ``snap * eps`` times
        the largest coefficient that contributed to it (exact cancellation up
        to rounding)."""
        acc: dict = {}
        scale: dict = {}
        order = []
        for t in self.terms:
            k = (t.fx, t.fy)
            if k not in acc:
                acc[k] = 0.0
                scale[k] = 0.0
                order.append(k)
            acc[k] += t.coef
            scale[k] = max(scale[k], abs(t.coef))
        eps = np.finfo(float).eps
        out = []
        for k in order:
            if abs(acc[k]) > snap * eps * scale[k]:
                out.append(Term(acc[k], k[0], k[1]))
        return SeparableSum(tuple(out))

    def evaluate(self, x, y):
        """Pointwise values at matching arrays of points."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        out = np.zeros(np.broadcast(x, y).shape)
        for t in self.terms:
            out += t.coef * t.fx.value(x) * t.fy.value(y)
        return out

    def to_json(self) -> str:
        return json.dumps(
            [{"coef": t.coef, "fx": t.fx.describe(), "fy": t.fy.describe()} for t in self.terms],
            indent=1,
        )

    # convenience wrappers
    def dx(self, order: int = 1):
        return apply_x(Deriv(order), self)

    def dy(self, order: int = 1):
        return apply_y(Deriv(order), self)

    def dx_inv(self, order: int = 1, expand: bool = True):
        return apply_x(AntiDeriv(order, expand), self)


def add(a: SeparableSum, b: SeparableSum) -> SeparableSum:
    return a + b


def product(a: SeparableSum, b: SeparableSum) -> SeparableSum:
    out = []
    for s in a.terms:
        for t in b.terms:
            cx, fx = factor_product(s.fx, t.fx)
            if fx is None:
                continue
            cy, fy = factor_product(s.fy, t.fy)
            if fy is None:
                continue
            c = s.coef * t.coef * cx * cy
            if c != 0.0:
                out.append(Term(c, fx, fy))
    return SeparableSum(tuple(out))


def _apply(op, s: SeparableSum, axis: str) -> SeparableSum:
    cache: dict = {}
    out = []
    for t in s.terms:
        f = t.fx if axis == "x" else t.fy
        if f not in cache:
            cache[f] = op.apply(f)
        for c, g in cache[f]:
            if axis == "x":
                out.append(Term(t.coef * c, g, t.fy))
            else:
                out.append(Term(t.coef * c, t.fx, g))
    return SeparableSum(tuple(out))


def apply_x(op, s: SeparableSum) -> SeparableSum:
    return _apply(op, s, "x")


def apply_y(op, s: SeparableSum) -> SeparableSum:
    return _apply(op, s, "y")


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------


def _nu_key(nu: float) -> float:
    return float(np.round(nu, 7)) + 0.0


class _EnvelopeTable:
    """Distinct envelopes (profile-part tuples) with bandwidths and supports."""

    def __init__(self):
        self.index: dict = {}
        self.envs: list = []

    def add(self, parts) -> int:
        if parts not in self.index:
            self.index[parts] = len(self.envs)
            self.envs.append(parts)
        return self.index[parts]

    def bandwidth(self, i) -> float:
        return float(sum(q.bandwidth(o) for q, o in self.envs[i]))

    def support(self, i) -> tuple[float, float]:
        parts = self.envs[i]
        return (max(q.support[0] for q, _ in parts), min(q.support[1] for q, _ in parts))

    def evaluate(self, ids, s) -> np.ndarray:
        cache: dict = {}
        out = np.empty((len(ids), s.size))
        for r, i in enumerate(ids):
            v = np.ones_like(s)
            for q, o in self.envs[i]:
                if (q, o) not in cache:
                    cache[(q, o)] = q.value(s, o)
                v = v * cache[(q, o)]
            out[r] = v
        return out


def _oscillatory_integrals(table: _EnvelopeTable, requests: dict) -> dict:
    """``J(E_a E_b, nu)`` for requests ``{nu: {(a, b), ...}}`` with ``nu >= 0``."""
    results = {}
    for nu, pairs in requests.items():
        live = []
        lo, hi = math.inf, -math.inf
        wmax = 0.0
        for a, b in pairs:
            sa, sb = table.support(a), table.support(b)
            l, h = max(sa[0], sb[0]), min(sa[1], sb[1])
            if h <= l:
                results[(nu, a, b)] = 0.0
                continue
            live.append((a, b))
            lo, hi = min(lo, l), max(hi, h)
            wmax = max(wmax, table.bandwidth(a) + table.bandwidth(b))
        if not live:
            continue
        ids = sorted({i for p in live for i in p})
        pos = {i: r for r, i in enumerate(ids)}
        step = SAFETY * 2.0 * math.pi / (abs(nu) + wmax)
        n = int(math.ceil((hi - lo) / step))
        step = (hi - lo) / n
        acc = np.zeros((len(ids), len(ids)), dtype=complex if nu else float)
        for start in range(0, n + 1, CHUNK):
            m = np.arange(start, min(n + 1, start + CHUNK))
            s = lo + step * m
            vals = table.evaluate(ids, s)
            if nu:
                w = np.exp(1j * nu * step * m)
                acc += (vals * w) @ vals.T
            else:
                acc += vals @ vals.T
        phase = cmath.exp(1j * nu * lo) if nu else 1.0
        for a, b in live:
            results[(nu, a, b)] = step * phase * acc[pos[a], pos[b]]
    return results


def gram(fa: list, fb: list | None = None) -> np.ndarray:
    """Matrix of L2 inner products ``<fa_i, fb_j>`` of one-dimensional factors."""
    sym = fb is None
    fb = fa if sym else fb
    table = _EnvelopeTable()
    ea = [table.add(f.parts) for f in fa]
    eb = [table.add(f.parts) for f in fb]
    xa = [f.exponentials() for f in fa]
    xb = [f.exponentials() for f in fb]
    requests: dict = defaultdict(set)
    plan = []
    for i in range(len(fa)):
        for j in range(i if sym else 0, len(fb)):
            a, b = ea[i], eb[j]
            key = (min(a, b), max(a, b))
            width = table.bandwidth(a) + table.bandwidth(b)
            entries = []
            for nu1, c1 in xa[i].items():
                for nu2, c2 in xb[j].items():
                    nu = _nu_key(nu1 + nu2)
                    if abs(nu) > width:
                        continue
                    requests[abs(nu)].add(key)
                    entries.append((c1 * c2, nu, key))
            plan.append((i, j, entries))
    J = _oscillatory_integrals(table, requests)
    G = np.zeros((len(fa), len(fb)))
    for i, j, entries in plan:
        total = 0.0 + 0.0j
        for c, nu, key in entries:
            v = J.get((abs(nu), *key), 0.0)
            total += c * (v if nu >= 0 else np.conj(v))
        G[i, j] = total.real
        if sym:
            G[j, i] = total.real
    return G


def inner_1d(f: Factor1D, g: Factor1D) -> float:
    return float(gram([f], [g])[0, 0])


def integral_1d(f: Factor1D) -> float:
    """``int f`` over the line."""
    table = _EnvelopeTable()
    a = table.add(f.parts)
    wid = table.bandwidth(a)
    lo, hi = table.support(a)
    if hi <= lo:
        return 0.0
    total = 0.0 + 0.0j
    for nu, c in f.exponentials().items():
        nu = _nu_key(nu)
        if abs(nu) > wid:
            continue
        step = SAFETY * 2.0 * math.pi / (abs(nu) + wid)
        n = int(math.ceil((hi - lo) / step))
        step = (hi - lo) / n
        acc = 0.0 + 0.0j
        for start in range(0, n + 1, CHUNK):
            m = np.arange(start, min(n + 1, start + CHUNK))
            vals = table.evaluate([a], lo + step * m)[0]
            acc += np.sum(vals * np.exp(1j * nu * step * m)) if nu else np.sum(vals)
        total += c * step * cmath.exp(1j * nu * lo) * acc
    return float(total.real)


def _distinct(factors):
    idx: dict = {}
    out = []
    ids = []
    for f in factors:
        if f not in idx:
            idx[f] = len(out)
            out.append(f)
        ids.append(idx[f])
    return out, np.array(ids, dtype=int)


def inner(a: SeparableSum, b: SeparableSum) -> float:
    """2-D L2 inner product through 1-D Gram matrices."""
    a, b = a.merged(), b.merged()
    if not a.terms or not b.terms:
        return 0.0
    xs, ix = _distinct([t.fx for t in a.terms] + [t.fx for t in b.terms])
    ys, iy = _distinct([t.fy for t in a.terms] + [t.fy for t in b.terms])
    gx, gy = gram(xs), gram(ys)
    na = len(a.terms)
    ca = np.array([t.coef for t in a.terms])
    cb = np.array([t.coef for t in b.terms])
    m = gx[np.ix_(ix[:na], ix[na:])] * gy[np.ix_(iy[:na], iy[na:])]
    return float(ca @ m @ cb)


def l2_norm_squared(s: SeparableSum) -> float:
    s = s.merged()
    if not s.terms:
        return 0.0
    xs, ix = _distinct([t.fx for t in s.terms])
    ys, iy = _distinct([t.fy for t in s.terms])
    gx, gy = gram(xs), gram(ys)
    c = np.array([t.coef for t in s.terms])
    m = gx[np.ix_(ix, ix)] * gy[np.ix_(iy, iy)]
    return float(c @ m @ c)


def l2_norm(s: SeparableSum) -> float:
    """``sqrt(sum_ij c_i c_j <fx_i, fx_j> <fy_i, fy_j>)``."""
    return math.sqrt(max(l2_norm_squared(s), 0.0))


def integrate(s: SeparableSum) -> float:
    """``int int s dx dy``."""
    s = s.merged()
    cache: dict = {}

    def one(f):
        if f not in cache:
            cache[f] = integral_1d(f)
        return cache[f]

    return float(sum(t.coef * one(t.fx) * one(t.fy) for t in s.terms))


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------


def _check_box(f: Factor1D, g: Grid1D):
    lo, hi = f.support
    if lo < g.origin or hi > g.end:
        raise SupportOverflowError(
            f"support [{lo:.6g}, {hi:.6g}] of {f.key[:60]} exceeds box [{g.origin:.6g}, {g.end:.6g}]"
        )


def render(s: SeparableSum, grid: Grid2D) -> Field2D:
    """Pointwise evaluation on the grid."""
    out = np.zeros(grid.shape)
    xs, ix = _distinct([t.fx for t in s.terms])
    ys, iy = _distinct([t.fy for t in s.terms])
    for f in xs:
        _check_box(f, grid.gx)
    for f in ys:
        _check_box(f, grid.gy)
    xv = [f.value(grid.gx.points) for f in xs]
    yv = [f.value(grid.gy.points) for f in ys]
    for t, i, j in zip(s.terms, ix, iy):
        out += t.coef * np.outer(yv[j], xv[i])
    return Field2D(grid, out)


def fourier_coefficients_1d(f: Factor1D, g: Grid1D, real: bool) -> np.ndarray:
    """Fourier-series coefficients of ``f`` on the periodic box of ``g``,
    truncated to the modes of ``g`` (Nyquist removed).

    Computed from an oversampled FFT whose spacing resolves the factor's full
    bandwidth, so the result is the L2-orthogonal projection.
    """
    _check_box(f, g)
    need = f.bandwidth() * g.length / math.pi / SAFETY
    m = max(g.n, 1 << int(math.ceil(math.log2(max(need, 8.0)))))
    s = g.origin + g.length / m * np.arange(m)
    vals = f.value(s)
    if real:
        c = np.fft.rfft(vals)[: g.n // 2 + 1] / m
        c[-1] = 0.0
        return c
    full = np.fft.fft(vals) / m
    half = g.n // 2
    out = np.concatenate([full[:half], np.zeros(1, dtype=complex), full[m - half + 1 :]])
    return out


def project(s: SeparableSum, grid: Grid2D) -> SpectralField:
    """L2-orthogonal projection onto the grid's trigonometric polynomials."""
    s = s.merged()
    coeffs = np.zeros(grid.spectral_shape, dtype=complex)
    xs, ix = _distinct([t.fx for t in s.terms])
    ys, iy = _distinct([t.fy for t in s.terms])
    cx = [fourier_coefficients_1d(f, grid.gx, real=True) for f in xs]
    cy = [fourier_coefficients_1d(f, grid.gy, real=False) for f in ys]
    for t, i, j in zip(s.terms, ix, iy):
        coeffs += t.coef * np.outer(cy[j], cx[i])
    return SpectralField(grid, coeffs)
