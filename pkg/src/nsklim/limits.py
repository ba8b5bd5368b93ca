"""The two limit systems and the corrector machinery.

Covers the initial elliptic problem for the quasi-geostrophic sigma field,
the QG potential-vorticity equation

    d/dt (lap sigma - sigma) + perp_grad(sigma) . grad(lap sigma) = 0,

the 2D incompressible Euler system in vorticity-stream form, the embedding
of an Euler solution into the slab as the approximate solution
(eps^2 pi, w, eps pi), and the residuals R1-R3 of that approximation with
their eps-scaling measurements.
"""

from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass

import numpy as np

from nsklim.plane import (
    Field2D,
    PlaneGrid,
    curl2d,
    dealias2d,
    div2d,
    dx,
    dy,
    embed_in_slab,
    from_physical2d,
    invert_helmholtz_minus,
    invert_laplacian,
    jacobian,
    laplacian2d,
    l2_norm2d,
    perp_grad,
    sobolev_norm2d,
    to_physical2d,
    vertical_mean,
)
from nsklim.slab import ScalarField, SlabGrid, VectorField, zero_scalar, Parity


class SigmaSign(enum.Enum):
    """Which elliptic problem initializes sigma, see the module docstring."""

    PAPER_PLUS = "paper_plus"          # lap sigma + sigma = curl_bar + sigma_bar
    MINUS_CONSISTENT = "minus_consistent"  # lap sigma - sigma = curl_bar - sigma_bar


class ResonanceError(ValueError):
    """PaperPlus elliptic solve hit |xi| = 1 modes carrying energy."""

    def __init__(self, modes):
        self.modes = modes
        super().__init__(
            f"(lap + 1) is resonant at |xi| = 1; energetic modes: {modes}"
        )


def solve_initial_sigma(u0: VectorField, sigma0_data: ScalarField,
                        sign: SigmaSign = SigmaSign.MINUS_CONSISTENT) -> Field2D:
    """Initial sigma from the vertical means of curl_h u0 and sigma0.

    MINUS_CONSISTENT solves (lap - 1) sigma = curl_bar - sigma_bar, which is
    uniformly invertible and coincides with the geostrophic-kernel projection
    (and hence with potential-vorticity conservation of the limit equation).
    PAPER_PLUS solves (lap + 1) sigma = curl_bar + sigma_bar and raises on
    resonant |xi| = 1 content.
    """
    grid = PlaneGrid.horizontal_of(u0.grid)
    u1, u2 = u0.components[0], u0.components[1]
    curl_bar = curl2d(vertical_mean(u1), vertical_mean(u2))
    sigma_bar = vertical_mean(sigma0_data)
    if sign is SigmaSign.MINUS_CONSISTENT:
        f = curl_bar - sigma_bar
        return invert_helmholtz_minus(f)
    f = curl_bar + sigma_bar
    denom = 1.0 - grid.k2
    resonant = np.isclose(denom, 0.0)
    scale = max(float(np.abs(f.coeffs).max()), 1e-300)
    hot = resonant & (np.abs(f.coeffs) > 1e-14 * scale)
    if np.any(hot):
        jj = grid.jgrid
        modes = [(int(jj[i]), int(jj[k])) for i, k in zip(*np.nonzero(hot))]
        raise ResonanceError(modes)
    out = np.where(resonant, 0.0, f.coeffs / np.where(resonant, 1.0, denom))
    return Field2D(grid, out)


# --- quasi-geostrophic sigma-equation -----------------------------------------


@dataclass(frozen=True)
class QgState:
    sigma: Field2D
    time: float = 0.0


def sigma_from_pv(pv: Field2D) -> Field2D:
    """Invert (lap - 1) sigma = P; always well posed."""
    return invert_helmholtz_minus(pv)


def pv_of(sigma: Field2D) -> Field2D:
    return laplacian2d(sigma) - sigma


def qg_rhs(state: QgState) -> Field2D:
    """d/dt of the potential vorticity: -perp_grad(sigma) . grad(lap sigma)."""
    return -jacobian(state.sigma, laplacian2d(state.sigma))


def qg_energy(sigma: Field2D) -> float:
    """E = (1/2) int (|grad sigma|^2 + sigma^2)."""
    return 0.5 * sobolev_norm2d(sigma, 1) ** 2


def _pv_rhs(pv: Field2D) -> Field2D:
    return qg_rhs(QgState(sigma_from_pv(pv)))


def qg_step(state: QgState, dt: float) -> QgState:
    """Classical RK4 on the potential vorticity."""
    p0 = pv_of(state.sigma)
    k1 = _pv_rhs(p0)
    k2 = _pv_rhs(p0 + (0.5 * dt) * k1)
    k3 = _pv_rhs(p0 + (0.5 * dt) * k2)
    k4 = _pv_rhs(p0 + dt * k3)
    p1 = p0 + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return QgState(sigma_from_pv(p1), state.time + dt)


def qg_run(initial: QgState, t_end: float, dt: float = 5e-3):
    """Integrate to t_end (final partial step shortened); returns QgState."""
    state = initial
    while state.time < t_end - 1e-12:
        step = min(dt, t_end - state.time)
        state = qg_step(state, step)
    return state


class QgTrajectory:
    """Advance-on-demand QG solution for observer-time lookups."""

    def __init__(self, initial: QgState, dt: float = 5e-3):
        self.state = initial
        self.dt = dt

    def state_at(self, t: float) -> QgState:
        if t < self.state.time - 1e-12:
            raise ValueError("QgTrajectory can only advance forward")
        self.state = qg_run(self.state, t, self.dt)
        return self.state


# --- 2D incompressible Euler ---------------------------------------------------


@dataclass(frozen=True)
class EulerState2D:
    w: tuple  # (Field2D, Field2D), divergence-free
    pi: Field2D
    time: float = 0.0


def velocity_from_vorticity(omega: Field2D):
    """w = perp_grad(psi), lap psi = omega with the mean mode removed."""
    fluct = omega.with_coeffs(omega.coeffs * (1 - _mean_mask(omega.grid)))
    psi = invert_laplacian(fluct)
    return perp_grad(psi)


def _mean_mask(grid: PlaneGrid):
    m = np.zeros((grid.n, grid.n))
    m[0, 0] = 1.0
    return m


def _advect(w, f: Field2D, mean_w=(0.0, 0.0)) -> Field2D:
    w1p = to_physical2d(w[0]) + mean_w[0]
    w2p = to_physical2d(w[1]) + mean_w[1]
    return dealias2d(from_physical2d(
        f.grid, w1p * to_physical2d(dx(f)) + w2p * to_physical2d(dy(f))))


def euler_pressure(w) -> Field2D:
    """Solve lap pi = -div(w . grad w) with zero-mean gauge."""
    adv1 = _advect(w, w[0])
    adv2 = _advect(w, w[1])
    rhs = -(dx(adv1) + dy(adv2))
    return invert_laplacian(rhs)


def euler_rhs_vorticity(omega: Field2D, mean_w=(0.0, 0.0)) -> Field2D:
    w = velocity_from_vorticity(omega)
    return -_advect(w, omega, mean_w)


def _euler_step_vorticity(omega: Field2D, dt: float, mean_w=(0.0, 0.0)) -> Field2D:
    k1 = euler_rhs_vorticity(omega, mean_w)
    k2 = euler_rhs_vorticity(omega + (0.5 * dt) * k1, mean_w)
    k3 = euler_rhs_vorticity(omega + (0.5 * dt) * k2, mean_w)
    k4 = euler_rhs_vorticity(omega + dt * k3, mean_w)
    return omega + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def euler_state_from_vorticity(omega: Field2D, time: float = 0.0) -> EulerState2D:
    w = velocity_from_vorticity(omega)
    return EulerState2D(w, euler_pressure(w), time)


def make_euler_state(w1: Field2D, w2: Field2D, time: float = 0.0,
                     div_tol: float = 1e-10) -> EulerState2D:
    scale = max(l2_norm2d(w1), l2_norm2d(w2), 1e-300)
    if l2_norm2d(div2d(w1, w2)) > div_tol * scale:
        raise ValueError("Euler initial data must be divergence-free")
    return EulerState2D((w1, w2), euler_pressure((w1, w2)), time)


def euler2d_run(initial: EulerState2D, t_end: float, dt: float = 5e-3) -> EulerState2D:
    """Vorticity-stream pseudo-spectral integration to t_end."""
    omega = curl2d(*initial.w)
    mean_w = (float(initial.w[0].coeffs[0, 0].real),
              float(initial.w[1].coeffs[0, 0].real))
    t = initial.time
    while t < t_end - 1e-12:
        step = min(dt, t_end - t)
        omega = _euler_step_vorticity(omega, step, mean_w)
        t += step
    w = velocity_from_vorticity(omega)
    # the mean velocity (torus momentum) is conserved; re-attach it
    w = (w[0] + _mean_field(initial.w[0]), w[1] + _mean_field(initial.w[1]))
    return EulerState2D(w, euler_pressure(w), t)


def _mean_field(f: Field2D) -> Field2D:
    c = f.grid.zeros()
    c[0, 0] = f.coeffs[0, 0]
    return Field2D(f.grid, c)


def euler_energy(w) -> float:
    return 0.5 * (l2_norm2d(w[0]) ** 2 + l2_norm2d(w[1]) ** 2)


def euler_enstrophy(w) -> float:
    return 0.5 * l2_norm2d(curl2d(*w)) ** 2


class EulerTrajectory:
    """Advance-on-demand Euler solution; also serves time derivatives.

    pi_t uses a centered difference of the pressure solve at spacing h,
    advancing short RK4 legs of +/- h from the current state.
    """

    def __init__(self, initial: EulerState2D, dt: float = 5e-3, h: float = 1e-4):
        self.state = initial
        self.dt = dt
        self.h = h

    def state_at(self, t: float) -> EulerState2D:
        if t < self.state.time - 1e-12:
            raise ValueError("EulerTrajectory can only advance forward")
        self.state = euler2d_run(self.state, t, self.dt)
        return self.state

    def derivatives_at(self, t: float):
        """(dw/dt, dpi/dt) at time t; dw/dt from the momentum equation."""
        state = self.state_at(t)
        w, pi = state.w, state.pi
        dw_dt = tuple(-(_advect(w, w[i])) - g for i, g in enumerate((dx(pi), dy(pi))))
        omega = curl2d(*w)
        om_p = _euler_step_vorticity(omega, self.h)
        om_m = _euler_step_vorticity(omega, -self.h)
        pi_p = euler_pressure(velocity_from_vorticity(om_p))
        pi_m = euler_pressure(velocity_from_vorticity(om_m))
        dpi_dt = (pi_p - pi_m) * (1.0 / (2.0 * self.h))
        return dw_dt, dpi_dt


# --- corrector and residuals -----------------------------------------------------


def corrector(w_state: EulerState2D, eps: float, grid: SlabGrid):
    """Approximate slab solution (eps^2 pi, (w, 0), eps pi) at vertical mode 0."""
    q = embed_in_slab(w_state.pi * eps**2, grid)
    u = VectorField((embed_in_slab(w_state.w[0], grid),
                     embed_in_slab(w_state.w[1], grid),
                     zero_scalar(grid, Parity.ODD)))
    theta = embed_in_slab(w_state.pi * eps, grid)
    return q, u, theta


def corrector_residuals(w, pi: Field2D, dw_dt, dpi_dt: Field2D, eps: float,
                        mu: float = 1.0, lam: float = 1.0, kappa: float = 1.0,
                        euler_tol: float = 1e-6):
    """Residuals (R1, R2, R3) of the approximate solution.

        R1 = eps^2 (pi_t + w.grad pi)
        R2 = eps kappa (1 + eps^3 pi) grad lap pi - (1 + eps^4 pi) grad pi
             - eps mu lap w
        R3 = eps (1 + eps^3 pi) (pi_t + w.grad pi) - eps lam lap pi

    R2 is vector valued (two Field2D); R1, R3 are scalars.  dw_dt is used to
    validate that (w, pi) solves the Euler system before trusting the scaling.
    """
    grid = pi.grid
    residual = [dw_dt[i] + _advect(w, w[i]) + g
                for i, g in enumerate((dx(pi), dy(pi)))]
    scale = max(sobolev_norm2d(list(w), 0), 1e-300)
    if sobolev_norm2d(residual, 0) > euler_tol * scale:
        warnings.warn("corrector inputs do not satisfy the Euler momentum equation")

    material = dpi_dt + _advect(w, pi)
    r1 = (eps**2) * material

    pi_phys = to_physical2d(pi)
    lap_pi = laplacian2d(pi)

    def times_one_plus(field: Field2D, power: int) -> Field2D:
        vals = (1.0 + eps**power * pi_phys) * to_physical2d(field)
        return dealias2d(from_physical2d(grid, vals))

    r2 = []
    for comp in range(2):
        d = (dx, dy)[comp]
        term_cap = (eps * kappa) * times_one_plus(d(lap_pi), 3)
        term_pre = times_one_plus(d(pi), 4)
        term_visc = (eps * mu) * laplacian2d(w[comp])
        r2.append(term_cap - term_pre - term_visc)

    r3 = eps * times_one_plus(material, 3) - (eps * lam) * lap_pi
    return r1, tuple(r2), r3


def residual_norms(w_state: EulerState2D, traj_derivs, eps: float, s: int,
                   mu: float = 1.0, lam: float = 1.0, kappa: float = 1.0):
    """H^s norms of (R1, R2, R3) for one eps; helper for scaling sweeps."""
    dw_dt, dpi_dt = traj_derivs
    r1, r2, r3 = corrector_residuals(w_state.w, w_state.pi, dw_dt, dpi_dt, eps,
                                     mu=mu, lam=lam, kappa=kappa)
    return (sobolev_norm2d(r1, s), sobolev_norm2d(list(r2), s), sobolev_norm2d(r3, s))
