"""Spectral theory of the acoustic-rotation operator.

The operator acts on pairs (sigma, U) as  B[sigma, U] = [div U, e3 x U + grad sigma]
with sigma = q + theta and U = rho*u.  Per Fourier mode it is a 4x4 matrix
whose nonzero eigenvalues are +-i*sqrt(mu) for the two branches

    mu = ( S +- sqrt(S^2 - 4 k^2) ) / 2,      S = 1 + |xi|^2 + k^2,

so at k = 0 the minus branch collapses to 0 for every xi: that zero is the
only xi-uniform eigenvalue (the geostrophic kernel); the plus branch varies
with xi and contributes no point spectrum on the unbounded domain.  On the
slab the vertical wavenumber is realized as k = m*pi; the closed-form sweep
for the oracle comparison uses the unit-k convention (first vertical mode
at k = 1), which the formula covers equally.

Also here: the kernel (geostrophic) projection Q, the frequency cutoff P_M,
the RAGE time average of exp(-t B / eps), and the source terms (f, l) that
close the sonic system over an NSK state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.optimize import linear_sum_assignment

from nsklim.model import NskParams, NskState, nsk_rhs
from nsklim.slab import (
    Parity,
    ScalarField,
    SlabGrid,
    VectorField,
    dealias,
    derivative,
    divergence,
    from_physical,
    gradient,
    laplacian,
    sobolev_norm,
    to_physical,
    vector_laplacian,
)


@dataclass(frozen=True)
class AcousticSymbol:
    """4x4 symbol at one mode, plain-Fourier convention (paper's rows)."""

    xi: tuple
    k: float

    @property
    def matrix(self) -> np.ndarray:
        xi1, xi2 = self.xi
        k = self.k
        return np.array(
            [[0, 1j * xi1, 1j * xi2, 1j * k],
             [1j * xi1, 0, -1, 0],
             [1j * xi2, 1, 0, 0],
             [1j * k, 0, 0, 0]], dtype=complex)


def acoustic_mu(mode) -> tuple:
    """Closed-form branches (mu_plus, mu_minus); mu_minus = 0 at k = 0."""
    xi1, xi2, k = (float(v) for v in mode)
    s = 1.0 + xi1**2 + xi2**2 + k**2
    disc = (s - 2.0 * abs(k)) * (s + 2.0 * abs(k))  # = s^2 - 4k^2, no cancellation
    root = np.sqrt(disc)
    return (s + root) / 2.0, (s - root) / 2.0


def _canonical_sort(w: np.ndarray) -> np.ndarray:
    """Order eigenvalues by (imaginary, real) part; stable for +-i omega pairs."""
    return w[np.lexsort((w.real, w.imag))]


def eigenvalues_closed_form(mode) -> np.ndarray:
    """The four symbol eigenvalues (+-i sqrt(mu+-)); 0 appears at k = 0."""
    mu_p, mu_m = acoustic_mu(mode)
    w = np.array([1j * np.sqrt(mu_p), -1j * np.sqrt(mu_p),
                  1j * np.sqrt(mu_m), -1j * np.sqrt(mu_m)])
    return _canonical_sort(w)


def eigenvalues_numeric(symbol: AcousticSymbol) -> np.ndarray:
    """Dense eigendecomposition; the brute-force oracle for the closed form."""
    return _canonical_sort(np.linalg.eigvals(symbol.matrix))


def eigenvalue_set_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Optimal-matching (assignment) distance between two eigenvalue multisets."""
    cost = np.abs(a[:, None] - b[None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].max())


# --- slab-side batched symbol ---------------------------------------------------


def _slab_symbol_array(grid: SlabGrid) -> np.ndarray:
    """Batched 4x4 symbols of B on the slab basis, masked for absent slots.

    Rows follow the cos/sin bookkeeping: div U picks +k U3, grad sigma's
    vertical component is -k sigma; the spectrum is unchanged (similar to the
    plain-Fourier form via diag(1, 1, 1, -i)).
    """
    shape = grid.coeff_shape
    xi1 = np.broadcast_to(grid.xi1, shape).astype(float)
    xi2 = np.broadcast_to(grid.xi2, shape).astype(float)
    kz = np.broadcast_to(grid.kz, shape).astype(float)
    B = np.zeros(shape + (4, 4), dtype=complex)
    B[..., 0, 1] = 1j * xi1
    B[..., 0, 2] = 1j * xi2
    B[..., 0, 3] = kz
    B[..., 1, 0] = 1j * xi1
    B[..., 1, 2] = -1.0
    B[..., 2, 0] = 1j * xi2
    B[..., 2, 1] = 1.0
    B[..., 3, 0] = -kz
    mask = _exists4(grid)[None, None, :, :]
    B *= mask[..., :, None] * mask[..., None, :]
    return B


def _exists4(grid: SlabGrid) -> np.ndarray:
    slots = np.arange(grid.n_v + 1)
    even = (slots < grid.n_v).astype(float)
    odd = (slots >= 1).astype(float)
    return np.stack([even, even, even, odd], axis=1)


def _stack4(sigma: ScalarField, U: VectorField) -> np.ndarray:
    return np.stack([sigma.coeffs, *(c.coeffs for c in U.components)])


def _unstack4(grid: SlabGrid, stacked: np.ndarray):
    sigma = ScalarField(grid, Parity.EVEN, stacked[0])
    U = VectorField((ScalarField(grid, Parity.EVEN, stacked[1]),
                     ScalarField(grid, Parity.EVEN, stacked[2]),
                     ScalarField(grid, Parity.ODD, stacked[3])))
    return sigma, U


# --- projections -----------------------------------------------------------------


def apply_acoustic_operator(sigma: ScalarField, U: VectorField):
    """B(sigma, U) = (div U, e3 x U + grad sigma) on slab fields."""
    u1, u2, _ = U.components
    vec = VectorField((derivative(sigma, 1) - u2,
                       derivative(sigma, 2) + u1,
                       derivative(sigma, 3)))
    return divergence(U), vec


def kernel_projection_Q(sigma: ScalarField, U: VectorField):
    """L2-orthogonal projection onto ker B (geostrophic, x3-independent).

    Per horizontal mode the kernel is the line spanned by
    (sigma, U1, U2) = (1, -i xi2, i xi1); all m > 0 content is annihilated.
    The rank-1 formula is the closed-form solution of the 3-unknown
    constrained least squares, so Q is exactly idempotent and self-adjoint.
    """
    grid = sigma.grid
    xi1 = grid.xi1[:, :, 0]
    xi2 = grid.xi2[:, :, 0]
    s0 = sigma.coeffs[:, :, 0]
    u1 = U.components[0].coeffs[:, :, 0]
    u2 = U.components[1].coeffs[:, :, 0]
    denom = 1.0 + xi1**2 + xi2**2
    coef = (s0 + 1j * xi2 * u1 - 1j * xi1 * u2) / denom

    sig_out = grid.zeros()
    u1_out = grid.zeros()
    u2_out = grid.zeros()
    sig_out[:, :, 0] = coef
    u1_out[:, :, 0] = -1j * xi2 * coef
    u2_out[:, :, 0] = 1j * xi1 * coef
    sigma_g = ScalarField(grid, Parity.EVEN, sig_out)
    U_g = VectorField((ScalarField(grid, Parity.EVEN, u1_out),
                       ScalarField(grid, Parity.EVEN, u2_out),
                       ScalarField(grid, Parity.ODD, grid.zeros())))
    return sigma_g, U_g


def cutoff_mask(grid: SlabGrid, M: float) -> np.ndarray:
    """Keep modes with |xi_h| + |k| <= M (physical wavenumbers, k = m*pi)."""
    xi_mag = np.sqrt(grid.xi1**2 + grid.xi2**2)
    return (xi_mag + grid.kz) <= M


def cutoff_projection_PM(sigma: ScalarField, U: VectorField, M: float):
    if M < 0:
        raise ValueError("M must be nonnegative")
    mask = cutoff_mask(sigma.grid, M)
    sig = sigma.with_coeffs(sigma.coeffs * mask)
    U_out = VectorField(tuple(c.with_coeffs(c.coeffs * mask) for c in U.components))
    return sig, U_out


def pair_h0_norm(sigma: ScalarField, U: VectorField) -> float:
    return float(np.sqrt(sobolev_norm(sigma, 0) ** 2 + sobolev_norm(U, 0) ** 2))


def pair_inner(a, b) -> float:
    from nsklim.slab import l2_inner

    return l2_inner(a[0], b[0]) + l2_inner(a[1], b[1])


# --- RAGE time averaging ----------------------------------------------------------


def _phi(z: np.ndarray) -> np.ndarray:
    """(exp(z) - 1)/z, exact limit 1 at z = 0."""
    out = np.ones_like(z)
    nz = np.abs(z) > 1e-12
    out[nz] = np.expm1(z[nz]) / z[nz]
    small = ~nz & (np.abs(z) > 0)
    out[small] = 1.0 + z[small] / 2.0
    return out


def _time_average_quadrature(B: np.ndarray, tau: float, eps: float,
                             points_per_panel: int = 4) -> np.ndarray:
    """(1/tau) int_0^tau exp(-tB/eps) dt by composite Gauss-Legendre panels.

    Panel count scales with the oscillation rate ||B|| tau / eps so the rule
    stays inside its superconvergent regime (target accuracy 1e-8).
    """
    rate = np.linalg.norm(B, 2) * tau / eps
    panels = max(16, int(np.ceil(2.0 * rate)))
    nodes, weights = np.polynomial.legendre.leggauss(points_per_panel)
    acc = np.zeros_like(B)
    h = tau / panels
    for p in range(panels):
        a = p * h
        for x, w in zip(nodes, weights):
            t = a + 0.5 * h * (x + 1.0)
            acc += (0.5 * h * w) * scipy.linalg.expm(-t * B / eps)
    return acc / tau


@dataclass(frozen=True)
class RageResult:
    sigma: ScalarField
    U: VectorField
    norm: float


def rage_average(sigma: ScalarField, U: VectorField, M: float, tau: float,
                 eps: float, subdomain=None, cond_limit: float = 1e8) -> RageResult:
    """Q-complement of the time average (1/tau) int_0^tau exp(-t B/eps) x dt.

    Computed in closed form per mode from the eigendecomposition (the
    lambda = 0 kernel factor is exactly 1); ill-conditioned modes fall back
    to panel quadrature.  The returned norm is the H^0 norm of the Q-perp
    part, over `subdomain` (a diagnostics.Subdomain) when given, else global.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    grid = sigma.grid
    sigma, U = cutoff_projection_PM(sigma, U, M)
    X = _stack4(sigma, U).transpose(1, 2, 3, 0)  # (..., 4)

    B = _slab_symbol_array(grid)
    keep = cutoff_mask(grid, M)[..., None]
    flatB = B.reshape(-1, 4, 4)
    w, v = np.linalg.eig(flatB)
    conds = np.linalg.cond(v)
    bad = ~np.isfinite(conds) | (conds > cond_limit)
    if np.any(bad):
        v[bad] = np.eye(4)  # placeholder; these modes are overwritten below
    vinv = np.linalg.inv(v)
    phi = _phi(-w * tau / eps)
    A = (v * phi[:, None, :]) @ vinv
    for idx in np.nonzero(bad)[0]:
        A[idx] = _time_average_quadrature(flatB[idx], tau, eps)
    avg = np.einsum("mij,mj->mi", A, X.reshape(-1, 4)).reshape(X.shape)
    avg *= keep

    avg_sigma, avg_U = _unstack4(grid, avg.transpose(3, 0, 1, 2))
    g_sigma, g_U = kernel_projection_Q(avg_sigma, avg_U)
    perp_sigma = avg_sigma - g_sigma
    perp_U = avg_U - g_U
    if subdomain is None:
        norm = pair_h0_norm(perp_sigma, perp_U)
    else:
        from nsklim.diagnostics import subdomain_l2

        fields = [perp_sigma, *perp_U.components]
        norm = float(np.sqrt(sum(subdomain_l2(f, subdomain) ** 2 for f in fields)))
    return RageResult(perp_sigma, perp_U, norm)


# --- sonic-system source terms -----------------------------------------------------


@dataclass(frozen=True)
class AcousticSourceTerms:
    f: ScalarField
    l: VectorField


def momentum_density(state: NskState, params: NskParams) -> VectorField:
    """U = rho u, assembled pseudo-spectrally."""
    grid = state.grid
    rho = 1.0 + params.epsilon * to_physical(state.q)
    comps = []
    for j, par in ((0, Parity.EVEN), (1, Parity.EVEN), (2, Parity.ODD)):
        vals = rho * to_physical(state.u.components[j])
        comps.append(from_physical(grid, vals, par))
    return dealias(VectorField(tuple(comps)))


def sigma_of(state: NskState) -> ScalarField:
    return state.q + state.theta


def acoustic_sources(state: NskState, params: NskParams,
                     rhs_cache=None) -> AcousticSourceTerms:
    """Assemble (f, l) with eps*sigma_t + div U = eps*f, eps*U_t + B(sigma,U) = eps*l.

    f follows the polynomial list of the sonic system (equal to theta_t as an
    identity); l = -div(rho u x u) - grad(q theta) + eps mu lap u
    + eps (mu+nu) grad div u + kappa eps^(2a-2) rho grad lap rho.
    """
    eps = params.epsilon
    grid = state.grid
    q, u, theta = state.q, state.u, state.theta
    if rhs_cache is None:
        rhs_cache = nsk_rhs(state, params)
    dq, _, dtheta = rhs_cache

    qp = to_physical(q)
    thetap = to_physical(theta)
    rho = 1.0 + eps * qp
    up = [to_physical(c) for c in u.components]
    grad_q = [to_physical(derivative(q, ax)) for ax in (1, 2, 3)]
    grad_theta = [to_physical(derivative(theta, ax)) for ax in (1, 2, 3)]
    grad_u = [[to_physical(derivative(u.components[j], i + 1)) for j in range(3)]
              for i in range(3)]
    div_u = grad_u[0][0] + grad_u[1][1] + grad_u[2][2]
    lap_q = to_physical(laplacian(q))
    lap_theta = to_physical(laplacian(theta))
    q_t = to_physical(dq)
    theta_t = to_physical(dtheta)

    sym = sum((grad_u[i][j] + grad_u[j][i]) ** 2 for i in range(3) for j in range(3))
    psi = params.nu * div_u**2 + 0.5 * params.mu * sym
    grad_q_sq = sum(g**2 for g in grad_q)
    phi_prime = params.kappa * (rho * lap_q + 0.5 * eps * grad_q_sq) * div_u \
        - params.kappa * eps * sum(grad_q[i] * grad_q[j] * grad_u[i][j]
                                   for i in range(3) for j in range(3))
    adv_q = sum(up[m] * grad_q[m] for m in range(3))
    adv_theta = sum(up[m] * grad_theta[m] for m in range(3))
    f_phys = q_t + adv_q - eps * qp * theta_t + params.lam * lap_theta \
        - rho * adv_theta - thetap * div_u - eps * qp * thetap * div_u \
        + eps * psi + phi_prime
    f = dealias(from_physical(grid, f_phys, Parity.EVEN))

    # l: -div(rho u x u) - grad(q theta) + viscous + capillary
    l_comps = []
    momentum_flux = [[rho * up[i] * up[j] for j in range(3)] for i in range(3)]
    flux_parities = [[Parity.EVEN] * 3 for _ in range(3)]
    for i in range(3):
        for j in range(3):
            odd = (i == 2) != (j == 2)
            flux_parities[i][j] = Parity.ODD if odd else Parity.EVEN
    qtheta = from_physical(grid, qp * thetap, Parity.EVEN)
    grad_qtheta = gradient(dealias(qtheta))
    lap_u = vector_laplacian(u)
    grad_div = gradient(divergence(u))
    grad_lap_q = gradient(laplacian(q))
    cap_scale = params.kappa * eps ** (2 * int(params.alpha) - 1)
    for i in range(3):
        div_flux = None
        for j in range(3):
            fld = from_physical(grid, momentum_flux[j][i], flux_parities[j][i])
            term = derivative(dealias(fld), j + 1)
            div_flux = term if div_flux is None else div_flux + term
        cap_phys = cap_scale * rho * to_physical(grad_lap_q.components[i])
        par = Parity.ODD if i == 2 else Parity.EVEN
        cap = from_physical(grid, cap_phys, par)
        comp = -1.0 * div_flux - grad_qtheta.components[i] \
            + (eps * params.mu) * lap_u.components[i] \
            + (eps * (params.mu + params.nu)) * grad_div.components[i] \
            + cap
        l_comps.append(dealias(comp))
    return AcousticSourceTerms(f, VectorField(tuple(l_comps)))
