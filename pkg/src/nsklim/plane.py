"""Horizontal-only spectral fields on the torus [0, 2*pi*L)^2.

These are the k = 0 (vertical-mean) slices of the slab fields: same Fourier
convention f(x) = sum_j c_j exp(i j.x / L), same dealiasing rule.  The limit
models (QG sigma-equation, 2D Euler) and the corrector live here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from nsklim.slab import Parity, ScalarField, SlabGrid, symmetrize_reality


@dataclass(frozen=True)
class PlaneGrid:
    """Spectral discretization of the horizontal torus."""

    n: int
    l_h: float = 1.0
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        if self.n < 8 or (self.n & (self.n - 1)) != 0:
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")
        if not 0.5 < self.dealias_fraction <= 1.0:
            raise ValueError("dealias_fraction must lie in (1/2, 1]")

    @classmethod
    def horizontal_of(cls, grid: SlabGrid) -> "PlaneGrid":
        return cls(grid.n_h, grid.l_h, grid.dealias_fraction)

    @property
    def jgrid(self) -> np.ndarray:
        return np.fft.fftfreq(self.n, d=1.0 / self.n).astype(int)

    @property
    def xi1(self) -> np.ndarray:
        return (self.jgrid / self.l_h).reshape(self.n, 1)

    @property
    def xi2(self) -> np.ndarray:
        return (self.jgrid / self.l_h).reshape(1, self.n)

    @property
    def k2(self) -> np.ndarray:
        return self.xi1**2 + self.xi2**2

    @property
    def dealias_mask(self) -> np.ndarray:
        cut = int(np.floor(self.dealias_fraction * self.n / 2))
        j = np.abs(self.jgrid)
        return (j <= cut).reshape(self.n, 1) & (j <= cut).reshape(1, self.n)

    @property
    def x(self) -> np.ndarray:
        return 2 * np.pi * self.l_h * np.arange(self.n) / self.n

    @property
    def area(self) -> float:
        return (2 * np.pi * self.l_h) ** 2

    @property
    def cell_area(self) -> float:
        return (2 * np.pi * self.l_h / self.n) ** 2

    def zeros(self) -> np.ndarray:
        return np.zeros((self.n, self.n), dtype=complex)


@dataclass(frozen=True)
class Field2D:
    """Horizontal spectral scalar (the k = 0 slice of a ScalarField)."""

    grid: PlaneGrid
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape != (self.grid.n, self.grid.n):
            raise ValueError("coefficient shape does not match the grid")

    def with_coeffs(self, coeffs) -> "Field2D":
        return Field2D(self.grid, coeffs)

    def __add__(self, other):
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other):
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, scalar):
        return self.with_coeffs(self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_coeffs(-self.coeffs)


def zero2d(grid: PlaneGrid) -> Field2D:
    return Field2D(grid, grid.zeros())


def to_physical2d(f: Field2D) -> np.ndarray:
    return np.ascontiguousarray(np.fft.ifft2(f.coeffs, norm="forward").real)


def from_physical2d(grid: PlaneGrid, values: np.ndarray) -> Field2D:
    return Field2D(grid, np.fft.fft2(values, norm="forward"))


def dx(f: Field2D) -> Field2D:
    return f.with_coeffs(1j * f.grid.xi1 * f.coeffs)


def dy(f: Field2D) -> Field2D:
    return f.with_coeffs(1j * f.grid.xi2 * f.coeffs)


def laplacian2d(f: Field2D) -> Field2D:
    return f.with_coeffs(-f.grid.k2 * f.coeffs)


def perp_grad(f: Field2D):
    """perp-gradient (-dy f, dx f); geostrophic velocity of a streamfunction."""
    return (-dy(f), dx(f))


def curl2d(u1: Field2D, u2: Field2D) -> Field2D:
    """Vertical vorticity d1 u2 - d2 u1."""
    return dx(u2) - dy(u1)


def div2d(u1: Field2D, u2: Field2D) -> Field2D:
    return dx(u1) + dy(u2)


def dealias2d(f: Field2D) -> Field2D:
    return f.with_coeffs(f.coeffs * f.grid.dealias_mask)


def invert_laplacian(f: Field2D, mean_tol: float = 1e-10) -> Field2D:
    """Solve lap(u) = f with zero-mean gauge; the mean mode of f must vanish."""
    scale = max(float(np.abs(f.coeffs).max()), 1.0)
    if abs(f.coeffs[0, 0]) > mean_tol * scale:
        raise ValueError(
            f"invert_laplacian requires zero mean, got mean mode {f.coeffs[0, 0]}"
        )
    k2 = f.grid.k2.copy()
    k2[0, 0] = 1.0
    out = -f.coeffs / k2
    out[0, 0] = 0.0
    return f.with_coeffs(out)


def invert_helmholtz_minus(f: Field2D) -> Field2D:
    """Solve (lap - 1) u = f; uniformly invertible."""
    return f.with_coeffs(-f.coeffs / (1.0 + f.grid.k2))


def jacobian(a: Field2D, b: Field2D) -> Field2D:
    """Dealiased J(a, b) = d1 a d2 b - d2 a d1 b = perp_grad(a) . grad(b)."""
    ax, ay = to_physical2d(dx(a)), to_physical2d(dy(a))
    bx, by = to_physical2d(dx(b)), to_physical2d(dy(b))
    return dealias2d(from_physical2d(a.grid, ax * by - ay * bx))


def l2_norm2d(f: Field2D) -> float:
    return float(np.sqrt(np.sum(np.abs(f.coeffs) ** 2) * f.grid.area))


def sobolev_norm2d(f, s: int = 0) -> float:
    """H^s norm; a tuple/list argument is treated as a vector field."""
    if isinstance(f, (tuple, list)):
        return float(np.sqrt(sum(sobolev_norm2d(c, s) ** 2 for c in f)))
    w = (1.0 + f.grid.k2) ** s * f.grid.area
    return float(np.sqrt(np.sum(w * np.abs(f.coeffs) ** 2)))


def mean2d(f: Field2D) -> float:
    return float(f.coeffs[0, 0].real)


def random_field2d(grid: PlaneGrid, rng, decay: float = 4.0,
                   amplitude: float = 1.0) -> Field2D:
    raw = rng.standard_normal((grid.n, grid.n)) + 1j * rng.standard_normal((grid.n, grid.n))
    raw *= (1.0 + grid.k2) ** (-decay / 2.0)
    c = symmetrize_reality(raw[:, :, None])[:, :, 0]
    f = dealias2d(Field2D(grid, c))
    if amplitude == 0.0:
        return zero2d(grid)
    peak = np.abs(to_physical2d(f)).max()
    return f if peak == 0.0 else f * (amplitude / peak)


# --- embedding into / extraction from the slab --------------------------------


def embed_in_slab(f: Field2D, grid: SlabGrid) -> ScalarField:
    """Place a horizontal field at vertical mode m = 0 (Even, x3-independent)."""
    if f.grid.n != grid.n_h or f.grid.l_h != grid.l_h:
        raise ValueError("horizontal grids do not match")
    c = grid.zeros()
    c[:, :, 0] = f.coeffs
    return ScalarField(grid, Parity.EVEN, c)


def vertical_mean(f: ScalarField) -> Field2D:
    """Exact vertical average: the m = 0 cosine coefficient (0 for Odd fields)."""
    pg = PlaneGrid.horizontal_of(f.grid)
    if f.parity is Parity.ODD:
        return zero2d(pg)
    return Field2D(pg, f.coeffs[:, :, 0].copy())
