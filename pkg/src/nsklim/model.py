"""The scaled non-isentropic NSK system as a right-hand-side evaluator.

State variables are the fluctuations (q, u, theta) with rho = 1 + eps*q and
Theta = 1 + eps*theta.  The momentum and temperature equations are divided by
rho pointwise, which makes the stiff part exactly constant-coefficient:

    dq/dt     = -(1/eps) div u                                   + N_q
    du/dt     = -(1/eps) grad(q + theta) - (c/eps) e3 x u
                + kappa eps^(2a-1) grad lap q
                + eps mu lap u + eps (mu+nu) grad div u           + N_u
    dtheta/dt = -(1/eps) div u + lam lap theta                    + N_theta

(the rotation term is exactly linear after the division, and the capillary
term (1/eps^(2-2a)) rho grad lap rho reduces exactly to its linear form).
The linear part is collected per Fourier mode into a 5x5 StiffSymbol acting
on (q, u1, u2, u3, theta); the nonlinear remainder is evaluated
pseudo-spectrally with dealiasing.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import scipy.linalg

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
    to_physical,
    vector_laplacian,
)


class Alpha(enum.IntEnum):
    """Capillary scaling exponent: One = QG-limit case, Zero = 2D-Euler case."""

    ONE = 1
    ZERO = 0


@dataclass(frozen=True)
class NskParams:
    """Physical and scaling parameters of the system."""

    epsilon: float
    alpha: Alpha = Alpha.ONE
    mu: float = 1.0
    nu: float = 0.0
    lam: float = 1.0
    kappa: float = 1.0
    R: float = 1.0
    c_v: float = 1.0
    coriolis: float = 1.0  # rotation scale; the alpha=0 rate experiment sets 0

    def __post_init__(self):
        if not 0.0 < self.epsilon <= 1.0:
            raise ValueError("epsilon must lie in (0, 1]")
        if self.mu <= 0 or 2 * self.mu + 3 * self.nu <= 0:
            raise ValueError("need mu > 0 and 2*mu + 3*nu > 0")
        if self.lam <= 0 or self.kappa <= 0:
            raise ValueError("lam and kappa must be positive")
        if self.R <= 0 or self.c_v <= 0:
            raise ValueError("R and c_v must be positive")

    @property
    def gamma(self) -> float:
        return 1.0 + self.R / self.c_v

    @property
    def capillary_coeff(self) -> float:
        """kappa * eps^(2*alpha - 1); stiff at alpha = 0."""
        return self.kappa * self.epsilon ** (2 * int(self.alpha) - 1)


@dataclass(frozen=True)
class NskState:
    q: ScalarField
    u: VectorField
    theta: ScalarField
    time: float = 0.0

    def __post_init__(self):
        if self.q.parity is not Parity.EVEN or self.theta.parity is not Parity.EVEN:
            raise ValueError("q and theta must be Even")
        if self.u.parities != (Parity.EVEN, Parity.EVEN, Parity.ODD):
            raise ValueError("u must have the velocity parity layout (E, E, O)")

    @property
    def grid(self) -> SlabGrid:
        return self.q.grid


class PositivityError(RuntimeError):
    """rho = 1 + eps*q dropped below the admissible threshold."""

    def __init__(self, min_rho: float, location, time: float):
        self.min_rho = min_rho
        self.location = location
        self.time = time
        super().__init__(
            f"min rho = {min_rho:.6g} at (x1, x2, x3) = {location} (t = {time:.6g})"
        )


POSITIVITY_THRESHOLD = 0.1


def density(state: NskState, params: NskParams) -> np.ndarray:
    return 1.0 + params.epsilon * to_physical(state.q)


def check_positivity(state: NskState, params: NskParams,
                     threshold: float = POSITIVITY_THRESHOLD) -> np.ndarray:
    """Return the physical density, raising with diagnostics if too small."""
    rho = density(state, params)
    mn = float(rho.min())
    if mn <= threshold:
        grid = state.grid
        i, j, l = np.unravel_index(int(rho.argmin()), rho.shape)
        loc = (float(grid.x[i]), float(grid.x[j]), float(grid.z[l]))
        raise PositivityError(mn, loc, state.time)
    return rho


# --- stiff symbol ------------------------------------------------------------


@dataclass(frozen=True)
class StiffSymbol:
    """Per-mode 5x5 linear generator on (q, u1, u2, u3, theta)."""

    mode: tuple  # (xi1, xi2, k)
    oscillatory: np.ndarray  # acoustic + rotation + linear capillary
    dissipative: np.ndarray  # viscosity, grad div, heat conduction

    @property
    def matrix(self) -> np.ndarray:
        return self.oscillatory + self.dissipative


def assemble_stiff_symbol(mode, params: NskParams, exists=None) -> StiffSymbol:
    """Build the symbol at one mode; `exists` masks absent parity slots."""
    xi1, xi2, k = (float(v) for v in mode)
    eps = params.epsilon
    k2 = xi1**2 + xi2**2 + k**2
    cap = params.capillary_coeff
    rot = params.coriolis / eps

    A = np.zeros((5, 5), dtype=complex)
    div_row = np.array([0.0, 1j * xi1, 1j * xi2, k, 0.0])
    A[0] = -div_row / eps
    A[4] = -div_row / eps
    for i, g in ((1, 1j * xi1), (2, 1j * xi2), (3, -k)):
        A[i, 0] += -g / eps - cap * g * k2
        A[i, 4] += -g / eps
    A[1, 2] += rot
    A[2, 1] -= rot

    D = np.zeros((5, 5), dtype=complex)
    for i in (1, 2, 3):
        D[i, i] -= eps * params.mu * k2
    graddiv = np.outer(np.array([1j * xi1, 1j * xi2, -k]),
                       np.array([1j * xi1, 1j * xi2, k]))
    D[1:4, 1:4] += eps * (params.mu + params.nu) * graddiv
    D[4, 4] -= params.lam * k2

    if exists is not None:
        m = np.asarray(exists, dtype=float)
        A = m[:, None] * A * m[None, :]
        D = m[:, None] * D * m[None, :]
    return StiffSymbol((xi1, xi2, k), A, D)


def exp_stiff(symbol: StiffSymbol, dt: float, cond_limit: float = 1e8) -> np.ndarray:
    """exp(dt * L) by eigendecomposition, expm fallback if V is ill-conditioned."""
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    if dt == 0.0:
        return np.eye(5, dtype=complex)
    L = symbol.matrix
    w, v = np.linalg.eig(L)
    if np.linalg.cond(v) > cond_limit:
        return scipy.linalg.expm(dt * L)
    return (v * np.exp(dt * w)) @ np.linalg.inv(v)


def _component_exists(grid: SlabGrid) -> np.ndarray:
    """(n_v+1, 5) mask: Even components live on slots < n_v, u3 on slots >= 1."""
    slots = np.arange(grid.n_v + 1)
    even = (slots < grid.n_v).astype(float)
    odd = (slots >= 1).astype(float)
    return np.stack([even, even, even, odd, even], axis=1)


def build_symbol_array(grid: SlabGrid, params: NskParams):
    """Batched symbols, shape (n_h, n_h, n_v+1, 5, 5)."""
    xi1 = np.broadcast_to(grid.xi1, grid.coeff_shape).astype(float)
    xi2 = np.broadcast_to(grid.xi2, grid.coeff_shape).astype(float)
    kz = np.broadcast_to(grid.kz, grid.coeff_shape).astype(float)
    eps = params.epsilon
    k2 = xi1**2 + xi2**2 + kz**2
    cap = params.capillary_coeff
    rot = params.coriolis / eps

    L = np.zeros(grid.coeff_shape + (5, 5), dtype=complex)
    grads = (1j * xi1, 1j * xi2, -kz)
    divs = (1j * xi1, 1j * xi2, kz)
    for j, d in enumerate(divs):
        L[..., 0, 1 + j] = -d / eps
        L[..., 4, 1 + j] = -d / eps
    for i, g in enumerate(grads):
        L[..., 1 + i, 0] = -g / eps - cap * g * k2
        L[..., 1 + i, 4] = -g / eps
    L[..., 1, 2] += rot
    L[..., 2, 1] -= rot
    for i in range(3):
        L[..., 1 + i, 1 + i] -= eps * params.mu * k2
        for j in range(3):
            L[..., 1 + i, 1 + j] += eps * (params.mu + params.nu) * grads[i] * divs[j]
    L[..., 4, 4] -= params.lam * k2

    mask = _component_exists(grid)[None, None, :, :]
    L *= mask[..., :, None] * mask[..., None, :]
    return L


class StiffPropagator:
    """Cached per-mode eigendecomposition of the stiff symbol.

    exp(dt*L) for any dt is three batched matmuls; modes whose eigenvector
    matrix is ill-conditioned (cond > 1e8) fall back to scaling-and-squaring.
    """

    def __init__(self, grid: SlabGrid, params: NskParams, cond_limit: float = 1e8):
        self.grid = grid
        self.params = params
        self.shape = grid.coeff_shape
        L = build_symbol_array(grid, params).reshape(-1, 5, 5)
        self._L = L
        w, v = np.linalg.eig(L)
        conds = np.linalg.cond(v)
        self._bad = np.nonzero(~np.isfinite(conds) | (conds > cond_limit))[0]
        self._w = w
        self._v = v
        self._vinv = np.linalg.inv(v)
        if self._bad.size:
            # keep eig output harmless where unused
            self._w[self._bad] = 0.0
        self._cache: dict = {}

    def expm(self, dt: float) -> np.ndarray:
        key = float(dt)
        if key not in self._cache:
            if dt == 0.0:
                E = np.broadcast_to(np.eye(5, dtype=complex),
                                    self._L.shape).copy()
            else:
                E = (self._v * np.exp(dt * self._w)[:, None, :]) @ self._vinv
                for idx in self._bad:
                    E[idx] = scipy.linalg.expm(dt * self._L[idx])
            self._cache[key] = np.ascontiguousarray(E.reshape(self.shape + (5, 5)))
        return self._cache[key]

    def apply(self, E: np.ndarray, stacked: np.ndarray) -> np.ndarray:
        return np.einsum("abcij,jabc->iabc", E, stacked)


# --- state stacking -----------------------------------------------------------


def stack_state(state: NskState) -> np.ndarray:
    return np.stack([state.q.coeffs, *(c.coeffs for c in state.u.components),
                     state.theta.coeffs])


def unstack_state(grid: SlabGrid, stacked: np.ndarray, time: float) -> NskState:
    q = ScalarField(grid, Parity.EVEN, stacked[0])
    u = VectorField((ScalarField(grid, Parity.EVEN, stacked[1]),
                     ScalarField(grid, Parity.EVEN, stacked[2]),
                     ScalarField(grid, Parity.ODD, stacked[3])))
    theta = ScalarField(grid, Parity.EVEN, stacked[4])
    return NskState(q, u, theta, time)


# --- right-hand side ----------------------------------------------------------


def linear_rhs(state: NskState, params: NskParams):
    """Constant-coefficient part assembled with spectral operators.

    Independent route from the StiffSymbol matrices; the two are compared in
    tests (linearization consistency oracle).
    """
    eps = params.epsilon
    q, u, theta = state.q, state.u, state.theta
    div_u = divergence(u)
    dq = (-1.0 / eps) * div_u
    grad_sum = gradient(q + theta)
    e3xu = VectorField((-u.components[1], u.components[0],
                        0.0 * u.components[2]))
    du = (-1.0 / eps) * grad_sum - (params.coriolis / eps) * e3xu \
        + (eps * params.mu) * vector_laplacian(u) \
        + (eps * (params.mu + params.nu)) * gradient(div_u) \
        + params.capillary_coeff * gradient(laplacian(q))
    dtheta = (-1.0 / eps) * div_u + params.lam * laplacian(theta)
    return dq, du, dtheta


def nonlinear_rhs(state: NskState, params: NskParams, positivity: bool = True):
    """Nonlinear remainder N(state) = full rhs - linear part, dealiased."""
    eps = params.epsilon
    grid = state.grid
    q, u, theta = state.q, state.u, state.theta

    qp = to_physical(q)
    rho = 1.0 + eps * qp
    if positivity:
        check_positivity(state, params)
    up = [to_physical(c) for c in u.components]
    thetap = to_physical(theta)
    grad_u = [[to_physical(derivative(u.components[j], i + 1)) for j in range(3)]
              for i in range(3)]  # grad_u[i][j] = d_i u_j
    grad_q = [to_physical(derivative(q, ax)) for ax in (1, 2, 3)]
    grad_theta = [to_physical(derivative(theta, ax)) for ax in (1, 2, 3)]
    div_u = grad_u[0][0] + grad_u[1][1] + grad_u[2][2]
    lap_q = to_physical(laplacian(q))
    lap_theta = to_physical(laplacian(theta))
    lap_u = [to_physical(c) for c in vector_laplacian(u).components]
    grad_div = [to_physical(c) for c in gradient(divergence(u)).components]

    # continuity: -div(q u), assembled spectrally from the dealiased product
    qu = [from_physical(grid, qp * up[j], par)
          for j, par in ((0, Parity.EVEN), (1, Parity.EVEN), (2, Parity.ODD))]
    n_q = -divergence(dealias(VectorField(tuple(qu))))

    # momentum remainder
    q_over_rho = qp / rho
    n_u_phys = []
    for i in range(3):
        adv = sum(up[m] * grad_u[m][i] for m in range(3))
        pres = q_over_rho * (grad_q[i] + grad_theta[i])
        qtheta_grad = (qp * grad_theta[i] + thetap * grad_q[i]) / rho
        # remainder of (eps/rho) X against the linear eps X is -(eps^2 q/rho) X
        visc = (eps**2 * qp / rho) * (params.mu * lap_u[i]
                                      + (params.mu + params.nu) * grad_div[i])
        n_u_phys.append(-adv + pres - qtheta_grad - visc)
    n_u = VectorField(tuple(
        from_physical(grid, n_u_phys[i], par)
        for i, par in ((0, Parity.EVEN), (1, Parity.EVEN), (2, Parity.ODD))))

    # temperature remainder with the heat sources
    sym = sum((grad_u[i][j] + grad_u[j][i]) ** 2 for i in range(3) for j in range(3))
    psi = params.nu * div_u**2 + 0.5 * params.mu * sym  # 2 mu D(u):grad u
    grad_q_sq = sum(g**2 for g in grad_q)
    phi_prime = params.kappa * (rho * lap_q + 0.5 * eps * grad_q_sq) * div_u \
        - params.kappa * eps * sum(grad_q[i] * grad_q[j] * grad_u[i][j]
                                   for i in range(3) for j in range(3))
    adv_theta = sum(up[m] * grad_theta[m] for m in range(3))
    n_theta_phys = -adv_theta - thetap * div_u \
        - (eps * params.lam * qp / rho) * lap_theta \
        + (eps * psi + phi_prime) / rho
    n_theta = from_physical(grid, n_theta_phys, Parity.EVEN)

    return dealias(n_q), dealias(n_u), dealias(n_theta)


def nsk_rhs(state: NskState, params: NskParams, include_nonlinear: bool = True):
    """Full right-hand side (dq/dt, du/dt, dtheta/dt) of the divided system."""
    dq, du, dtheta = linear_rhs(state, params)
    if include_nonlinear:
        nq, nu_, ntheta = nonlinear_rhs(state, params)
        dq, du, dtheta = dq + nq, du + nu_, dtheta + ntheta
    return dq, du, dtheta
