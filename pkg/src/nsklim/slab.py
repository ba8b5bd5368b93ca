"""Spectral function spaces on the slab [0, 2*pi*L)^2 x (0, 1).

Horizontal directions are periodic Fourier, exp(i*(j1*x1 + j2*x2)/L) with
integer j; the vertical direction uses half-range cosine/sine families,

    Even:  cos(m*pi*x3),  m = 0..n_v-1
    Odd:   sin(m*pi*x3),  m = 1..n_v

chosen so that full-slip walls (u.n = 0, n x curl u = 0, Neumann for the
scalars) hold identically in the basis.  Coefficient arrays have shape
(n_h, n_h, n_v+1): axis 0/1 are numpy FFT ordering of j1/j2, axis 2 is the
vertical slot m, so slot m always carries wavenumber k = m*pi for either
parity.  Even fields keep slot n_v at zero, Odd fields keep slot 0 at zero.

Vertical collocation lives on the staggered grid z_l = (l + 1/2)/n_v, where
DCT-II/DST-II are exact analysis transforms for both families.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct, dst


class Parity(enum.Enum):
    """Vertical symmetry tag: Even = cosine family, Odd = sine family."""

    EVEN = "even"
    ODD = "odd"

    def flipped(self) -> "Parity":
        return Parity.ODD if self is Parity.EVEN else Parity.EVEN


def product_parity(a: Parity, b: Parity) -> Parity:
    """Parity of a pointwise product (cos*cos, sin*sin -> cos; mixed -> sin)."""
    return Parity.EVEN if a is b else Parity.ODD


class ParityError(ValueError):
    """Declared parity tag incompatible with the requested operation."""


@dataclass(frozen=True)
class SlabGrid:
    """Spectral discretization of the slab; immutable after construction."""

    n_h: int
    n_v: int
    l_h: float = 1.0
    dealias_fraction: float = 2.0 / 3.0

    def __post_init__(self):
        for n, lo, name in ((self.n_h, 8, "n_h"), (self.n_v, 4, "n_v")):
            if n < lo or (n & (n - 1)) != 0:
                raise ValueError(f"{name} must be a power of two >= {lo}, got {n}")
        if not self.l_h > 0:
            raise ValueError("l_h must be positive")
        if not 0.5 < self.dealias_fraction <= 1.0:
            raise ValueError("dealias_fraction must lie in (1/2, 1]")

    # --- wavenumber bookkeeping -------------------------------------------

    @property
    def jgrid(self) -> np.ndarray:
        """Integer horizontal mode numbers in FFT ordering, shape (n_h,)."""
        return np.fft.fftfreq(self.n_h, d=1.0 / self.n_h).astype(int)

    @property
    def xi1(self) -> np.ndarray:
        return (self.jgrid / self.l_h).reshape(self.n_h, 1, 1)

    @property
    def xi2(self) -> np.ndarray:
        return (self.jgrid / self.l_h).reshape(1, self.n_h, 1)

    @property
    def kz(self) -> np.ndarray:
        """Vertical wavenumbers k = m*pi per slot, shape (1, 1, n_v+1)."""
        return (np.pi * np.arange(self.n_v + 1)).reshape(1, 1, self.n_v + 1)

    @property
    def k2_total(self) -> np.ndarray:
        return self.xi1**2 + self.xi2**2 + self.kz**2

    @property
    def coeff_shape(self):
        return (self.n_h, self.n_h, self.n_v + 1)

    @property
    def dealias_mask(self) -> np.ndarray:
        cut_h = int(np.floor(self.dealias_fraction * self.n_h / 2))
        cut_v = int(np.floor(self.dealias_fraction * self.n_v))
        j = np.abs(self.jgrid)
        keep_1 = (j <= cut_h).reshape(self.n_h, 1, 1)
        keep_2 = (j <= cut_h).reshape(1, self.n_h, 1)
        keep_v = (np.arange(self.n_v + 1) <= cut_v).reshape(1, 1, self.n_v + 1)
        return keep_1 & keep_2 & keep_v

    # --- physical collocation ---------------------------------------------

    @property
    def x(self) -> np.ndarray:
        """Horizontal collocation points, shape (n_h,)."""
        return 2 * np.pi * self.l_h * np.arange(self.n_h) / self.n_h

    @property
    def z(self) -> np.ndarray:
        """Staggered vertical collocation points (l+1/2)/n_v, shape (n_v,)."""
        return (np.arange(self.n_v) + 0.5) / self.n_v

    @property
    def cell_volume(self) -> float:
        return (2 * np.pi * self.l_h / self.n_h) ** 2 / self.n_v

    @property
    def volume(self) -> float:
        return (2 * np.pi * self.l_h) ** 2

    def norm_weights(self) -> np.ndarray:
        """L2 weights per vertical slot: int cos^2 = 1 (m=0) or 1/2, int sin^2 = 1/2."""
        w = np.full(self.n_v + 1, 0.5)
        w[0] = 1.0
        return w.reshape(1, 1, self.n_v + 1)

    def zeros(self) -> np.ndarray:
        return np.zeros(self.coeff_shape, dtype=complex)


@dataclass(frozen=True)
class ScalarField:
    """Spectral scalar with a declared vertical parity.

    Coefficients are never mutated after construction; every operation
    returns a new field, so fields are safe to share across threads.
    """

    grid: SlabGrid
    parity: Parity
    coeffs: np.ndarray

    def __post_init__(self):
        if self.coeffs.shape != self.grid.coeff_shape:
            raise ValueError(
                f"coefficient shape {self.coeffs.shape} != {self.grid.coeff_shape}"
            )

    def with_coeffs(self, coeffs, parity=None) -> "ScalarField":
        return ScalarField(self.grid, parity or self.parity, coeffs)

    def __add__(self, other: "ScalarField") -> "ScalarField":
        _check_compatible(self, other)
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        _check_compatible(self, other)
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "ScalarField":
        return self.with_coeffs(self.coeffs * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "ScalarField":
        return self.with_coeffs(-self.coeffs)


@dataclass(frozen=True)
class VectorField:
    """Three scalar components; velocity layout is (Even, Even, Odd)."""

    components: tuple

    def __post_init__(self):
        if len(self.components) != 3:
            raise ValueError("a VectorField has exactly three components")
        g = self.components[0].grid
        if any(c.grid is not g and c.grid != g for c in self.components):
            raise ValueError("components live on different grids")

    @property
    def grid(self) -> SlabGrid:
        return self.components[0].grid

    @property
    def parities(self):
        return tuple(c.parity for c in self.components)

    def __add__(self, other):
        return VectorField(tuple(a + b for a, b in zip(self.components, other.components)))

    def __sub__(self, other):
        return VectorField(tuple(a - b for a, b in zip(self.components, other.components)))

    def __mul__(self, scalar):
        return VectorField(tuple(c * scalar for c in self.components))

    __rmul__ = __mul__


def _check_compatible(a: ScalarField, b: ScalarField):
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")
    if a.parity is not b.parity:
        raise ParityError(f"parity mismatch: {a.parity} vs {b.parity}")


def zero_scalar(grid: SlabGrid, parity: Parity) -> ScalarField:
    return ScalarField(grid, parity, grid.zeros())


def zero_velocity(grid: SlabGrid) -> VectorField:
    return VectorField(
        (zero_scalar(grid, Parity.EVEN), zero_scalar(grid, Parity.EVEN),
         zero_scalar(grid, Parity.ODD))
    )


def constant_field(grid: SlabGrid, value: float) -> ScalarField:
    c = grid.zeros()
    c[0, 0, 0] = value
    return ScalarField(grid, Parity.EVEN, c)


# --- transforms -------------------------------------------------------------


def to_physical(f: ScalarField) -> np.ndarray:
    """Evaluate on the collocation grid; returns real (n_h, n_h, n_v)."""
    grid, c = f.grid, f.coeffs
    nv = grid.n_v
    if f.parity is Parity.EVEN:
        if np.any(c[:, :, nv] != 0):
            raise ParityError("Even field carries the top sine-only slot")
        x = c[:, :, :nv].copy()
        x[:, :, 1:] *= 0.5
        vert = dct(x, type=3, axis=2)
    else:
        if np.any(c[:, :, 0] != 0):
            raise ParityError("Odd field carries the constant cosine slot")
        x = c[:, :, 1:].copy()
        x[:, :, : nv - 1] *= 0.5
        vert = dst(x, type=3, axis=2)
    phys = np.fft.ifft2(vert, axes=(0, 1), norm="forward")
    return np.ascontiguousarray(phys.real)


def from_physical(grid: SlabGrid, values: np.ndarray, parity: Parity) -> ScalarField:
    """Analyze collocation values (n_h, n_h, n_v) into spectral coefficients."""
    if values.shape != (grid.n_h, grid.n_h, grid.n_v):
        raise ValueError(f"expected physical shape {(grid.n_h, grid.n_h, grid.n_v)}")
    nv = grid.n_v
    horiz = np.fft.fft2(values, axes=(0, 1), norm="forward")
    c = grid.zeros()
    if parity is Parity.EVEN:
        y = dct(horiz, type=2, axis=2)
        c[:, :, :nv] = y / nv
        c[:, :, 0] = y[:, :, 0] / (2 * nv)
    else:
        y = dst(horiz, type=2, axis=2)
        c[:, :, 1:] = y / nv
        c[:, :, nv] = y[:, :, nv - 1] / (2 * nv)
    return ScalarField(grid, parity, c)


def evaluate_at_points(f: ScalarField, points) -> np.ndarray:
    """Direct basis summation at arbitrary (x1, x2, x3) points (slow; oracle use)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    grid = f.grid
    j = grid.jgrid
    out = np.empty(pts.shape[0], dtype=complex)
    mslots = np.arange(grid.n_v + 1)
    for p, (x1, x2, x3) in enumerate(pts):
        e1 = np.exp(1j * j * x1 / grid.l_h).reshape(grid.n_h, 1, 1)
        e2 = np.exp(1j * j * x2 / grid.l_h).reshape(1, grid.n_h, 1)
        if f.parity is Parity.EVEN:
            vert = np.cos(mslots * np.pi * x3)
        else:
            vert = np.sin(mslots * np.pi * x3)
        out[p] = np.sum(f.coeffs * e1 * e2 * vert.reshape(1, 1, -1))
    return out.real


def check_reality(f: ScalarField, tol: float = 1e-12) -> float:
    """Max violation of coeffs(-j1,-j2,m) == conj(coeffs(j1,j2,m))."""
    c = f.coeffs
    flipped = np.conj(np.roll(c[::-1, ::-1, :], shift=(1, 1), axis=(0, 1)))
    return float(np.abs(c - flipped).max())


def symmetrize_reality(coeffs: np.ndarray) -> np.ndarray:
    """Project coefficients onto the real-field (Hermitian) subspace."""
    flipped = np.conj(np.roll(coeffs[::-1, ::-1, :], shift=(1, 1), axis=(0, 1)))
    return 0.5 * (coeffs + flipped)


# --- differential operators --------------------------------------------------


def derivative(f: ScalarField, axis: int) -> ScalarField:
    """Exact spectral derivative; axis 3 flips the vertical parity."""
    grid = f.grid
    if axis == 1:
        return f.with_coeffs(1j * grid.xi1 * f.coeffs)
    if axis == 2:
        return f.with_coeffs(1j * grid.xi2 * f.coeffs)
    if axis == 3:
        if f.parity is Parity.EVEN:
            # d/dz cos(m pi z) = -m pi sin(m pi z); slot alignment is identity
            return f.with_coeffs(-grid.kz * f.coeffs, parity=Parity.ODD)
        out = grid.kz * f.coeffs
        out[:, :, grid.n_v] = 0.0  # cos(n_v pi z) is outside the Even family
        return f.with_coeffs(out, parity=Parity.EVEN)
    raise ValueError(f"axis must be 1, 2 or 3, got {axis}")


def gradient(f: ScalarField) -> VectorField:
    return VectorField((derivative(f, 1), derivative(f, 2), derivative(f, 3)))


def divergence(u: VectorField) -> ScalarField:
    return derivative(u.components[0], 1) + derivative(u.components[1], 2) \
        + derivative(u.components[2], 3)


def curl(u: VectorField) -> VectorField:
    u1, u2, u3 = u.components
    return VectorField(
        (derivative(u3, 2) - derivative(u2, 3),
         derivative(u1, 3) - derivative(u3, 1),
         derivative(u2, 1) - derivative(u1, 2))
    )


def laplacian(f: ScalarField) -> ScalarField:
    return f.with_coeffs(-f.grid.k2_total * f.coeffs)


def vector_laplacian(u: VectorField) -> VectorField:
    return VectorField(tuple(laplacian(c) for c in u.components))


def dealias(f):
    """Zero modes beyond dealias_fraction of the per-axis cutoffs; idempotent."""
    if isinstance(f, VectorField):
        return VectorField(tuple(dealias(c) for c in f.components))
    return f.with_coeffs(f.coeffs * f.grid.dealias_mask)


def multiply(f: ScalarField, g: ScalarField) -> ScalarField:
    """Dealiased pointwise product with the induced parity."""
    if f.grid != g.grid:
        raise ValueError("fields live on different grids")
    vals = to_physical(f) * to_physical(g)
    return dealias(from_physical(f.grid, vals, product_parity(f.parity, g.parity)))


# --- norms -------------------------------------------------------------------

MAX_SOBOLEV_ORDER = 6


def sobolev_norm(f, s: int = 0) -> float:
    """H^s norm with (1 + |xi|^2 + k^2)^s weights; s = 0 is the L2(Omega) norm."""
    if not 0 <= s <= MAX_SOBOLEV_ORDER:
        raise ValueError(f"Sobolev order s must be in [0, {MAX_SOBOLEV_ORDER}]")
    if isinstance(f, VectorField):
        return float(np.sqrt(sum(sobolev_norm(c, s) ** 2 for c in f.components)))
    grid = f.grid
    weight = (1.0 + grid.k2_total) ** s * grid.norm_weights() * grid.volume
    return float(np.sqrt(np.sum(weight * np.abs(f.coeffs) ** 2)))


def l2_inner(f, g) -> float:
    """L2(Omega) inner product of two real fields (scalar or vector)."""
    if isinstance(f, VectorField):
        return float(sum(l2_inner(a, b) for a, b in zip(f.components, g.components)))
    _check_compatible(f, g)
    grid = f.grid
    w = grid.norm_weights() * grid.volume
    return float(np.sum(w * f.coeffs * np.conj(g.coeffs)).real)


def integral(f: ScalarField) -> float:
    """Integral over the slab: only the (0,0,0) cosine mode contributes."""
    if f.parity is Parity.ODD:
        return 0.0
    return float(f.coeffs[0, 0, 0].real * f.grid.volume)


# --- random fields -----------------------------------------------------------


def random_scalar_field(grid: SlabGrid, parity: Parity, rng, decay: float = 4.0,
                        amplitude: float = 1.0) -> ScalarField:
    """Smooth random field: coefficient decay (1+|xi|^2+k^2)^(-decay/2), dealiased.

    Normalized to max |f| = amplitude in physical space (amplitude 0 gives 0).
    Draw order is fixed, so a seeded rng makes this bit-reproducible.
    """
    shape = grid.coeff_shape
    raw = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    raw *= (1.0 + grid.k2_total) ** (-decay / 2.0)
    c = symmetrize_reality(raw)
    if parity is Parity.EVEN:
        c[:, :, grid.n_v] = 0.0
    else:
        c[:, :, 0] = 0.0
    f = dealias(ScalarField(grid, parity, c))
    if amplitude == 0.0:
        return zero_scalar(grid, parity)
    peak = np.abs(to_physical(f)).max()
    if peak == 0.0:
        return f
    return f * (amplitude / peak)


def random_velocity_field(grid: SlabGrid, rng, decay: float = 4.0,
                          amplitude: float = 1.0) -> VectorField:
    return VectorField(
        (random_scalar_field(grid, Parity.EVEN, rng, decay, amplitude),
         random_scalar_field(grid, Parity.EVEN, rng, decay, amplitude),
         random_scalar_field(grid, Parity.ODD, rng, decay, amplitude))
    )
