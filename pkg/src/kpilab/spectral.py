"""Periodic grids, Fourier-side operators and the KP-I linear flow.

Spectral coefficients use the real-FFT layout: an array of shape
``(n_y, n_x // 2 + 1)`` holding Fourier-series coefficients (FFT divided by
the number of samples).  Rows follow the standard FFT ordering in ``k_y``;
columns are ``k_x = 0 .. n_x / 2``.  Negative ``k_x`` are implied by
Hermitian symmetry since every field is real.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.fft as sfft


class ZeroFrequencyError(ValueError):
    """The symbol or its gradient was requested at xi = 0."""


class ZeroModeError(ValueError):
    """The x-mean of a field is not numerically zero, so d_x^{-1} is undefined."""


MEAN_TOL = 1e-10


# ---------------------------------------------------------------------------
# symbol
# ---------------------------------------------------------------------------


def kp_symbol(xi, eta):
    """``p(xi, eta) = xi^3 + eta^2 / xi``."""
    xi = np.asarray(xi, dtype=float)
    if np.any(xi == 0.0):
        raise ZeroFrequencyError("kp_symbol is undefined at xi = 0")
    out = xi**3 + np.asarray(eta, dtype=float) ** 2 / xi
    return float(out) if out.ndim == 0 else out


def kp_group_velocity(xi, eta):
    """Gradient of the symbol: ``(3 xi^2 - eta^2 / xi^2, 2 eta / xi)``."""
    xi = np.asarray(xi, dtype=float)
    eta = np.asarray(eta, dtype=float)
    if np.any(xi == 0.0):
        raise ZeroFrequencyError("group velocity is undefined at xi = 0")
    ratio = eta / xi
    vx = 3.0 * xi**2 - ratio**2
    vy = 2.0 * ratio
    if vx.ndim == 0:
        return float(vx), float(vy)
    return vx, vy


# ---------------------------------------------------------------------------
# grids and fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Grid1D:
    n: int
    length: float
    origin: float = 0.0

    def __post_init__(self):
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"grid size must be a power of two >= 8 (got {self.n})")
        if not self.length > 0:
            raise ValueError("grid length must be positive")

    @property
    def spacing(self) -> float:
        return self.length / self.n

    @property
    def points(self) -> np.ndarray:
        return self.origin + self.spacing * np.arange(self.n)

    @property
    def end(self) -> float:
        return self.origin + self.length

    def wavenumbers(self, real: bool = False) -> np.ndarray:
        """Angular frequencies ``2 pi k / L`` in FFT (or rFFT) order."""
        k = np.fft.rfftfreq(self.n, 1.0 / self.n) if real else np.fft.fftfreq(self.n, 1.0 / self.n)
        return 2.0 * math.pi * k / self.length

    def mode_index(self, real: bool = False) -> np.ndarray:
        return np.fft.rfftfreq(self.n, 1.0 / self.n) if real else np.fft.fftfreq(self.n, 1.0 / self.n)

    @classmethod
    def centered(cls, n: int, length: float, center: float = 0.0) -> "Grid1D":
        return cls(n, length, center - 0.5 * length)


@dataclass(frozen=True)
class Grid2D:
    gx: Grid1D
    gy: Grid1D

    @property
    def shape(self) -> tuple[int, int]:
        return (self.gy.n, self.gx.n)

    @property
    def spectral_shape(self) -> tuple[int, int]:
        return (self.gy.n, self.gx.n // 2 + 1)

    @property
    def cell_area(self) -> float:
        return self.gx.spacing * self.gy.spacing

    @property
    def area(self) -> float:
        return self.gx.length * self.gy.length

    def xi(self) -> np.ndarray:
        """x-frequencies broadcastable against the spectral array."""
        return self.gx.wavenumbers(real=True)[None, :]

    def eta(self) -> np.ndarray:
        return self.gy.wavenumbers()[:, None]

    def mesh(self):
        return np.meshgrid(self.gx.points, self.gy.points)


@dataclass(frozen=True, eq=False)
class Field2D:
    """Real samples with shape ``(n_y, n_x)`` (y outer, x inner)."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"value shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite samples")
        object.__setattr__(self, "values", v)

    def __add__(self, other: "Field2D") -> "Field2D":
        return Field2D(self.grid, self.values + other.values)

    def __sub__(self, other: "Field2D") -> "Field2D":
        return Field2D(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "Field2D":
        return Field2D(self.grid, self.values * c)

    __rmul__ = __mul__

    @classmethod
    def zeros(cls, grid: Grid2D) -> "Field2D":
        return cls(grid, np.zeros(grid.shape))


@dataclass(frozen=True, eq=False)
class SpectralField:
    grid: Grid2D
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape != self.grid.spectral_shape:
            raise ValueError("coefficient shape does not match grid")

    def __add__(self, other):
        return SpectralField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other):
        return SpectralField(self.grid, self.coeffs - other.coeffs)

    def __mul__(self, c):
        return SpectralField(self.grid, self.coeffs * c)

    __rmul__ = __mul__

    def mode(self, kx: int, ky: int) -> complex:
        """Coefficient of ``exp(i (xi x' + eta y'))`` for integer modes, where
        primes denote coordinates relative to the grid origin."""
        nx, ny = self.grid.gx.n, self.grid.gy.n
        if kx < 0:
            return complex(np.conj(self.coeffs[(-ky) % ny, -kx]))
        if kx > nx // 2:
            raise IndexError("k_x outside the resolved range")
        return complex(self.coeffs[ky % ny, kx])

    @classmethod
    def zeros(cls, grid: Grid2D) -> "SpectralField":
        return cls(grid, np.zeros(grid.spectral_shape, dtype=complex))


def _zero_nyquist(c: np.ndarray, grid: Grid2D) -> np.ndarray:
    c[:, -1] = 0.0
    c[grid.gy.n // 2, :] = 0.0
    return c


def to_spectral(u: Field2D) -> SpectralField:
    c = sfft.rfft2(u.values) / u.values.size
    return SpectralField(u.grid, _zero_nyquist(c, u.grid))


def to_physical(f: SpectralField) -> Field2D:
    n = f.grid.gx.n * f.grid.gy.n
    return Field2D(f.grid, sfft.irfft2(f.coeffs * n, s=f.grid.shape))


# ---------------------------------------------------------------------------
# operators
# ---------------------------------------------------------------------------


def dx(f: SpectralField, order: int = 1) -> SpectralField:
    if order < 1:
        raise ValueError("order must be >= 1")
    return SpectralField(f.grid, f.coeffs * (1j * f.grid.xi()) ** order)


def dy(f: SpectralField, order: int = 1) -> SpectralField:
    if order < 1:
        raise ValueError("order must be >= 1")
    return SpectralField(f.grid, f.coeffs * (1j * f.grid.eta()) ** order)


def check_zero_mode(f: SpectralField, mean_tol: float = MEAN_TOL) -> None:
    peak = float(np.max(np.abs(f.coeffs))) if f.coeffs.size else 0.0
    col = float(np.max(np.abs(f.coeffs[:, 0])))
    if col > mean_tol * peak:
        raise ZeroModeError(
            f"x-mean column has modulus {col:.3e} > {mean_tol:.1e} x peak {peak:.3e}"
        )


def _inverse_xi_power(grid: Grid2D, order: int) -> np.ndarray:
    xi = grid.xi()
    with np.errstate(divide="ignore", invalid="ignore"):
        mult = (1j * xi) ** (-float(order))
    mult[:, 0] = 0.0
    return mult


def dx_inv(f: SpectralField, order: int = 1, mean_tol: float = MEAN_TOL) -> SpectralField:
    """Multiply nonzero-xi modes by ``(i xi)^-order``; the xi = 0 column must vanish."""
    if order < 1:
        raise ValueError("order must be >= 1")
    check_zero_mode(f, mean_tol)
    return SpectralField(f.grid, f.coeffs * _inverse_xi_power(f.grid, order))


def abs_dx(f: SpectralField, s: float) -> SpectralField:
    """The ``|xi|^s`` multiplier with the zero mode removed."""
    mult = np.abs(f.grid.xi()) ** s
    mult[:, 0] = 0.0
    return SpectralField(f.grid, f.coeffs * mult)


def symbol_array(grid: Grid2D) -> np.ndarray:
    """``p(xi, eta)`` on the spectral array with the xi = 0 column set to 0."""
    xi, eta = grid.xi(), grid.eta()
    with np.errstate(divide="ignore", invalid="ignore"):
        p = xi**3 + eta**2 / xi
    p[:, 0] = 0.0
    return p


def linear_propagator(f: SpectralField, t: float, mean_tol: float = MEAN_TOL) -> SpectralField:
    """Exact flow of ``d_t + d_x^3 - d_x^{-1} d_y^2`` for time ``t``.

    Modes evolve as ``exp(i t p(xi, eta))`` so that the plane wave
    ``cos(lam x + 4 lam^3 t + sqrt(3) lam^2 y)`` is an orbit.
    """
    check_zero_mode(f, mean_tol)
    return SpectralField(f.grid, f.coeffs * np.exp(1j * t * symbol_array(f.grid)))


def dealias_mask(grid: Grid2D) -> np.ndarray:
    kx = np.abs(grid.gx.mode_index(real=True))[None, :]
    ky = np.abs(grid.gy.mode_index())[:, None]
    return (3 * kx <= grid.gx.n) & (3 * ky <= grid.gy.n)


def dealias(f: SpectralField) -> SpectralField:
    """Zero modes with ``|k_x| > n_x/3`` or ``|k_y| > n_y/3``."""
    return SpectralField(f.grid, np.where(dealias_mask(f.grid), f.coeffs, 0.0))


def l2_norm_spectral(f: SpectralField) -> float:
    """Continuous L2 norm of the trigonometric polynomial (Parseval)."""
    c = f.coeffs
    w = np.full(c.shape[1], 2.0)
    w[0] = 1.0
    if f.grid.gx.n % 2 == 0:
        w[-1] = 1.0
    return math.sqrt(f.grid.area * float(np.sum(w * np.sum(np.abs(c) ** 2, axis=0))))


def l2_norm_grid(u: Field2D) -> float:
    return math.sqrt(u.grid.cell_area * float(np.sum(u.values**2)))


def inner_spectral(f: SpectralField, g: SpectralField) -> float:
    w = np.full(f.coeffs.shape[1], 2.0)
    w[0] = 1.0
    w[-1] = 1.0
    return f.grid.area * float(np.sum(w * np.sum((f.coeffs * np.conj(g.coeffs)).real, axis=0)))


def padded_samples(f: SpectralField, factor_num: int = 2, factor_den: int = 1):
    """Samples of the band-limited field on a grid refined by
    ``factor_num / factor_den`` via zero padding, and the quadrature weight
    per sample.  Used for alias-free cubic and quartic integrals."""
    g = f.grid
    nx = g.gx.n * factor_num // factor_den
    ny = g.gy.n * factor_num // factor_den
    c = np.zeros((ny, nx // 2 + 1), dtype=complex)
    hy = g.gy.n // 2
    c[:hy, : g.gx.n // 2 + 1] = f.coeffs[:hy]
    c[ny - hy :, : g.gx.n // 2 + 1] = f.coeffs[hy:]
    vals = sfft.irfft2(c * (nx * ny), s=(ny, nx))
    return vals, g.area / (nx * ny)
