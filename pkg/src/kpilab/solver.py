"""Pseudospectral integration of KP-I on a periodic box.

The state is kept as real-FFT coefficients.  Time stepping is the
integrating-factor RK4 scheme: with ``L = i p(xi, eta)`` and
``E = exp(L dt / 2)``,

    a = N(u)
    b = N(E (u + dt/2 a))
    c = N(E u + dt/2 b)
    d = N(E^2 u + dt E c)
    u <- E^2 u + dt/6 (E^2 a + 2 E (b + c) + d)

where ``N(u) = -1/2 d_x(u^2)`` is evaluated pseudospectrally with the
two-thirds rule.  The linear flow is therefore exact and the x-mean column
stays identically zero.
"""

from __future__ import annotations

import csv
import math
import struct
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.fft as sfft

from .bumps import ApproxParams, make_bumps
from .functionals import Diagnostics, diagnostics
from .spectral import (
    Field2D,
    Grid1D,
    Grid2D,
    SpectralField,
    check_zero_mode,
    dealias_mask,
    dx,
    l2_norm_spectral,
    symbol_array,
    to_physical,
    to_spectral,
)

GROWTH_LIMIT = 1e6
DT_CAP = 1e-3


class InstabilityError(RuntimeError):
    """The field blew up (non-finite or far above its initial size)."""


@dataclass(frozen=True)
class SolverConfig:
    grid: Grid2D
    dt: float
    t_end: float
    dealias: bool = True
    monitor_stride: int = 10
    nonlinear: bool = True

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive; the sign of t_end sets the direction")
        if self.monitor_stride < 1:
            raise ValueError("monitor_stride must be >= 1")

    @property
    def n_steps(self) -> int:
        return max(1, int(math.ceil(abs(self.t_end) / self.dt - 1e-9)))

    @property
    def signed_dt(self) -> float:
        """Step actually taken: ``t_end / n_steps`` (lands on ``t_end``)."""
        return self.t_end / self.n_steps if self.t_end != 0 else 0.0


@dataclass
class Trajectory:
    snapshots: list = field(default_factory=list)  # (t, Field2D)
    diagnostics: list = field(default_factory=list)  # Diagnostics or dict rows

    @property
    def times(self) -> list[float]:
        return [t for t, _ in self.snapshots]

    @property
    def final(self) -> Field2D:
        return self.snapshots[-1][1]


class Stepper:
    """Precomputed multipliers for one grid."""

    def __init__(self, grid: Grid2D, dealias: bool = True, nonlinear: bool = True):
        self.grid = grid
        self.symbol = symbol_array(grid)
        self.ikx = 1j * grid.xi()
        self.size = grid.gx.n * grid.gy.n
        keep = dealias_mask(grid) if dealias else np.ones(grid.spectral_shape, dtype=bool)
        keep = keep.copy()
        keep[:, -1] = False
        keep[grid.gy.n // 2, :] = False
        self.keep = keep
        self.nonlinear_on = nonlinear
        self._factors: dict = {}

    def factors(self, dt: float):
        if dt not in self._factors:
            e = np.exp(0.5j * dt * self.symbol)
            self._factors = {dt: (e, e * e)}
        return self._factors[dt]

    def physical(self, c: np.ndarray) -> np.ndarray:
        return sfft.irfft2(c * self.size, s=self.grid.shape)

    def nonlinear(self, c: np.ndarray) -> np.ndarray:
        """``-1/2 d_x(u^2)`` in coefficient space."""
        if not self.nonlinear_on:
            return np.zeros_like(c)
        u = self.physical(c)
        w = sfft.rfft2(u * u) / self.size
        w *= self.keep
        return -0.5 * self.ikx * w

    def step(self, c: np.ndarray, dt: float) -> np.ndarray:
        e, e2 = self.factors(dt)
        a = self.nonlinear(c)
        b = self.nonlinear(e * (c + 0.5 * dt * a))
        ec = e * c
        cc = self.nonlinear(ec + 0.5 * dt * b)
        d = self.nonlinear(e2 * c + dt * e * cc)
        return e2 * c + (dt / 6.0) * (e2 * a + 2.0 * e * (b + cc) + d)


def _coefficients(u) -> SpectralField:
    return u if isinstance(u, SpectralField) else to_spectral(u)


def step(u, dt: float, dealias: bool = True, nonlinear: bool = True) -> Field2D:
    """Advance ``u`` by one integrating-factor RK4 step of size ``dt``."""
    f = _coefficients(u)
    check_zero_mode(f)
    st = Stepper(f.grid, dealias, nonlinear)
    c = f.coeffs * st.keep if dealias else f.coeffs
    return to_physical(SpectralField(f.grid, st.step(c, dt)))


def _check_growth(values: np.ndarray, ref: float, t: float):
    if not np.all(np.isfinite(values)):
        raise InstabilityError(f"non-finite field at t={t:.6g}")
    peak = float(np.max(np.abs(values)))
    if ref > 0 and peak > GROWTH_LIMIT * ref:
        raise InstabilityError(f"field max {peak:.3e} exceeds {GROWTH_LIMIT:.0e} x initial {ref:.3e} at t={t:.6g}")


def integrate(
    u0,
    cfg: SolverConfig,
    monitor: Callable[[float, SpectralField], object] | None = None,
    snapshot_stride: int | None = None,
) -> Trajectory:
    """Run the stepper; ``monitor(t, field)`` is called at t=0, every
    ``monitor_stride`` steps and at the end, and its results are collected
    as the trajectory's diagnostics."""
    f0 = _coefficients(u0)
    if f0.grid != cfg.grid:
        raise ValueError("initial data lives on a different grid")
    check_zero_mode(f0)
    st = Stepper(cfg.grid, cfg.dealias, cfg.nonlinear)
    c = f0.coeffs * st.keep if cfg.dealias else f0.coeffs.copy()
    traj = Trajectory()
    first = st.physical(f0.coeffs)
    ref = float(np.max(np.abs(first)))
    traj.snapshots.append((0.0, Field2D(cfg.grid, first)))
    if monitor is not None:
        traj.diagnostics.append(monitor(0.0, SpectralField(cfg.grid, c)))
    n, dt = cfg.n_steps, cfg.signed_dt
    for k in range(1, n + 1):
        c = st.step(c, dt)
        t = k * dt
        last = k == n
        if k % cfg.monitor_stride == 0 or last:
            vals = st.physical(c)
            _check_growth(vals, ref, t)
            if monitor is not None:
                traj.diagnostics.append(monitor(t, SpectralField(cfg.grid, c)))
            if last or (snapshot_stride and k % snapshot_stride == 0):
                traj.snapshots.append((t, Field2D(cfg.grid, vals)))
    return traj


def solve(u0, cfg: SolverConfig, snapshot_stride: int | None = None, full_diagnostics: bool = True) -> Trajectory:
    """Integrate KP-I from ``u0``; diagnostics (N, E, F, norms) at the
    monitor stride."""
    mon = (lambda t, f: diagnostics(f, t)) if full_diagnostics else None
    return integrate(u0, cfg, mon, snapshot_stride)


# ---------------------------------------------------------------------------
# policies
# ---------------------------------------------------------------------------


def _pow2_at_least(x: float) -> int:
    return max(8, 1 << int(math.ceil(math.log2(max(x, 1.0)))))


def resolution_policy(
    p: ApproxParams, t_end: float = 1.0, margin: float = 0.1, points_per_wavelength: float = 8.0
) -> Grid2D:
    """Box and grid for ``u_ap`` data.

    ``dx <= 2 pi / (m lam)``, ``dy <= 2 pi / (m sqrt(3) lam^2)`` with ``m``
    points per carrier wavelength (8 by default); each box
    extends ``margin`` of the support width beyond the support, and the y-box
    also covers the transport ``2 sqrt(3) lam |t_end|`` of the packet (toward
    negative y for forward time).
    """
    b = make_bumps(p)
    x0 = min(b.psi.support[0], b.psi_tilde.support[0])
    x1 = max(b.psi.support[1], b.psi_tilde.support[1])
    y0 = min(b.phi_lam.support[0], b.phi_tilde.support[0])
    y1 = max(b.phi_lam.support[1], b.phi_tilde.support[1])
    wx, wy = x1 - x0, y1 - y0
    x0, x1 = x0 - margin * wx, x1 + margin * wx
    y0, y1 = y0 - margin * wy, y1 + margin * wy
    shift = 2.0 * math.sqrt(3.0) * p.lam * abs(t_end)
    if t_end >= 0:
        y0 -= shift
    else:
        y1 += shift
    m = points_per_wavelength
    nx = _pow2_at_least((x1 - x0) / (2.0 * math.pi / (m * p.lam)))
    ny = _pow2_at_least((y1 - y0) / (2.0 * math.pi / (m * math.sqrt(3.0) * p.lam**2)))
    return Grid2D(Grid1D(nx, x1 - x0, x0), Grid1D(ny, y1 - y0, y0))


def dt_policy(grid: Grid2D, u_max: float, lam: float, cap: float = DT_CAP) -> float:
    """``min(0.2 / (lam max|u| n_x / L_x), cap)``."""
    if u_max <= 0:
        return cap
    return min(0.2 / (lam * u_max * grid.gx.n / grid.gx.length), cap)


# ---------------------------------------------------------------------------
# difference runs
# ---------------------------------------------------------------------------


def initial_data(p: ApproxParams, grid: Grid2D) -> SpectralField:
    """Galerkin projection of ``u_ap(0)`` onto the grid's Fourier modes."""
    from .approx import build_u_ap
    from .separable import project

    return project(build_u_ap(p, 0.0).total, grid)


def difference_run(p: ApproxParams, cfg: SolverConfig, snapshot_stride: int | None = None):
    """Integrate from ``u_ap(0)`` and measure ``v = u - u_ap(t)``.

    Both ``u`` and ``u_ap(t)`` are represented by their projections on the
    grid, so ``v(0) = 0`` exactly.  Returns a trajectory of ``v`` and rows
    ``t, v_l2, dx_v_l2, u_l2``.
    """
    from .approx import build_u_ap
    from .separable import project

    u0 = initial_data(p, cfg.grid)
    keep = Stepper(cfg.grid, cfg.dealias).keep if cfg.dealias else 1.0
    vt = Trajectory()

    def monitor(t, f):
        ap = project(build_u_ap(p, t).total, cfg.grid)
        v = SpectralField(cfg.grid, f.coeffs - ap.coeffs * keep)
        row = {
            "t": t,
            "v_l2": l2_norm_spectral(v),
            "dx_v_l2": l2_norm_spectral(dx(v)),
            "u_l2": l2_norm_spectral(f),
        }
        final = abs(t - cfg.t_end) <= 1e-12 * max(1.0, abs(cfg.t_end))
        if t == 0.0 or final or snapshot_stride:
            vt.snapshots.append((t, to_physical(v)))
        return row

    traj = integrate(u0, cfg, monitor)
    vt.diagnostics = traj.diagnostics
    return vt, traj.diagnostics


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------

_HEADER = struct.Struct("<qqddd")


def write_snapshot(path, u: Field2D, t: float) -> None:
    """Header ``n_x, n_y, L_x, L_y, t`` (little-endian 64-bit), then the
    row-major float64 samples."""
    g = u.grid
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(g.gx.n, g.gy.n, g.gx.length, g.gy.length, float(t)))
        fh.write(np.ascontiguousarray(u.values, dtype="<f8").tobytes())


def read_snapshot(path):
    """Returns ``(n_x, n_y, L_x, L_y, t, values)``."""
    with open(path, "rb") as fh:
        nx, ny, lx, ly, t = _HEADER.unpack(fh.read(_HEADER.size))
        vals = np.frombuffer(fh.read(), dtype="<f8").reshape(ny, nx)
    return nx, ny, lx, ly, t, vals


def write_diagnostics_csv(rows, path) -> None:
    rows = [r.row() if isinstance(r, Diagnostics) else dict(r) for r in rows]
    if not rows:
        raise ValueError("no diagnostics to write")
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.17g}" if isinstance(v, float) else v) for k, v in r.items()})


def energy_centroid(u) -> tuple[float, float]:
    """Centroid of ``u^2`` on the periodic box (no unwrapping)."""
    f = u if isinstance(u, Field2D) else to_physical(u)
    x, y = f.grid.mesh()
    w = f.values**2
    m = float(np.sum(w))
    return float(np.sum(w * x)) / m, float(np.sum(w * y)) / m
