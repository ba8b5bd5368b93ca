"""Measurable quantities behind the convergence statements.

The energy report evaluates the computable terms of the weighted functional
(sup-type snapshot terms plus time-integrated dissipation terms), the error
record packages the three corrector-difference norms, the compact-subdomain
L2 error measures the velocity against the geostrophic limit, and fit_rate
does the log-log least squares used by every scaling experiment.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from nsklim.model import NskParams, NskState, nsk_rhs, unstack_state
from nsklim.plane import perp_grad, to_physical2d
from nsklim.slab import (
    ScalarField,
    SlabGrid,
    VectorField,
    sobolev_norm,
    to_physical,
)

H4_MIN_GRID = 64  # below this n_h the H^4 terms are omitted (marker set)


@dataclass(frozen=True)
class EnergyReport:
    """Named energy-functional terms at one observation time."""

    time: float
    terms: dict
    flags: dict = field(default_factory=dict)

    def validate(self):
        for key, val in self.terms.items():
            if not np.isfinite(val) or val < 0:
                raise ValueError(f"energy term {key} = {val} is not finite/nonneg")


@dataclass(frozen=True)
class ErrorRecord:
    """Corrector-difference norms (e_q, e_u, e_theta) at one time."""

    eps: float
    e_q: float
    e_u: float
    e_theta: float
    s: int
    t: float

    @property
    def total(self) -> float:
        return self.e_q + self.e_u + self.e_theta


def _norm_sq(fields, s) -> float:
    return float(sum(sobolev_norm(f, s) ** 2 for f in fields))


def energy_functional(state: NskState, params: NskParams, rhs_cache=None,
                      second_derivs=None) -> EnergyReport:
    """Snapshot terms of the energy functional.

    rhs_cache supplies (q_t, u_t, theta_t); second time derivatives are only
    available through an EnergyTracker (centered differences of the stored
    first derivatives), which passes them via `second_derivs` and flags them
    as approximate.
    """
    eps = params.epsilon
    if rhs_cache is None:
        rhs_cache = nsk_rhs(state, params)
    dq, du, dtheta = rhs_cache
    grid = state.grid
    q, u, theta = state.q, state.u, state.theta
    # the density enters through its fluctuation rho - 1 = eps q, so the rest
    # state scores zero on every Sobolev term
    rho_fluct = eps * q

    rho_phys = 1.0 + eps * to_physical(q)
    linf_pair = max(np.abs(rho_phys).max(), np.abs(1.0 / rho_phys).max())
    terms = {
        "sup_H2(u,rho_fluct,eps_q,eps_theta)": _norm_sq(
            [*u.components, rho_fluct, eps * q, eps * theta], 2),
        "sup_H1(q,theta)": _norm_sq([q, theta], 1),
        "sup_H1(eps_qt,eps_ut,eps_thetat)": _norm_sq(
            [eps * dq, *(eps * du).components, eps * dtheta], 1),
        "sup_H3(eps_u,eps2_q,eps2_theta)": _norm_sq(
            [*(eps * u).components, eps**2 * q, eps**2 * theta], 3),
        "sup_Linf(rho,rho_inv)": float(linf_pair**2),
    }
    flags = {}
    if second_derivs is not None:
        qtt, utt, thetatt = second_derivs
        terms["sup_L2(eps2_qtt,eps2_utt,eps2_thetatt)"] = _norm_sq(
            [eps**2 * qtt, *(eps**2 * utt).components, eps**2 * thetatt], 0)
        flags["second_derivatives_approximate"] = True
    report = EnergyReport(state.time, terms, flags)
    report.validate()
    return report


def _dissipation_integrand(state, params, rhs_cache) -> dict:
    eps = params.epsilon
    q, u, theta = state.q, state.u, state.theta
    dq, du, dtheta = rhs_cache
    vals = {
        "int_H2(q,theta)": _norm_sq([q, theta], 2),
        "int_H3(eps_q,eps_u,eps_theta)": _norm_sq(
            [eps * q, *(eps * u).components, eps * theta], 3),
        "int_H2(eps_qt,eps_ut,eps_thetat)": _norm_sq(
            [eps * dq, *(eps * du).components, eps * dtheta], 2),
    }
    if state.grid.n_h >= H4_MIN_GRID:
        vals["int_eps_H4(eps2_u)"] = eps * _norm_sq([*(eps**2 * u).components], 4)
        vals["int_H4(eps2_q,eps2_theta)"] = _norm_sq([eps**2 * q, eps**2 * theta], 4)
    return vals


class EnergyTracker:
    """Observer accumulating EnergyReports along a run.

    Builds second time derivatives by centered differences of the stored
    first derivatives and accumulates the time-integrated dissipation terms
    with the trapezoid rule.  Call as tracker(state, step).
    """

    def __init__(self, params: NskParams):
        self.params = params
        self.reports = []
        self._samples = []  # (time, rhs_cache arrays) for FD of derivatives
        self._integrals = {}
        self._last_integrand = None
        self._last_time = None

    def __call__(self, state: NskState, step_index: int):
        rhs_cache = nsk_rhs(state, self.params)
        report = energy_functional(state, self.params, rhs_cache)
        integrand = _dissipation_integrand(state, self.params, rhs_cache)
        if self._last_integrand is not None:
            dt = state.time - self._last_time
            for key, val in integrand.items():
                prev = self._last_integrand[key]
                self._integrals[key] = self._integrals.get(key, 0.0) \
                    + 0.5 * dt * (prev + val)
        self._last_integrand = integrand
        self._last_time = state.time
        terms = dict(report.terms)
        terms.update(self._integrals)
        flags = dict(report.flags)
        if state.grid.n_h < H4_MIN_GRID:
            flags["H4_terms_omitted"] = True
        dq, du, dtheta = rhs_cache
        self._samples.append((state.time, np.stack(
            [dq.coeffs, *(c.coeffs for c in du.components), dtheta.coeffs])))
        self.reports.append(EnergyReport(state.time, terms, flags))
        self._attach_second_derivatives(state.grid)
        return self.reports[-1]

    def _attach_second_derivatives(self, grid):
        # centered difference needs three samples; updates the middle report
        if len(self._samples) < 3:
            return
        (t0, r0), (t1, r1), (t2, r2) = self._samples[-3:]
        if t2 == t0:
            return
        eps = self.params.epsilon
        mid = self.reports[-2]
        dd = (r2 - r0) / (t2 - t0)
        state_dd = unstack_state(grid, dd, t1)
        term = _norm_sq([eps**2 * state_dd.q, *(eps**2 * state_dd.u).components,
                         eps**2 * state_dd.theta], 0)
        terms = dict(mid.terms)
        terms["sup_L2(eps2_qtt,eps2_utt,eps2_thetatt)"] = term
        flags = dict(mid.flags)
        flags["second_derivatives_approximate"] = True
        self.reports[-2] = EnergyReport(mid.time, terms, flags)

    def growth_flags(self, factor: float = 10.0, floor_rel: float = 1e-6):
        """Terms (sup-family only) whose peak exceeds factor x initial value.

        Terms starting near zero are compared against floor_rel times the
        largest initial term instead.
        """
        if not self.reports:
            return {}
        sup_keys = [k for k in self.reports[0].terms if k.startswith("sup_")]
        initial = self.reports[0].terms
        scale = max(initial[k] for k in sup_keys)
        flagged = {}
        for key in sup_keys:
            base = max(initial.get(key, 0.0), floor_rel * scale)
            peak = max(r.terms.get(key, 0.0) for r in self.reports)
            if peak > factor * base:
                flagged[key] = peak / base
        return flagged


def error_norms(state: NskState, corrector_triple, s: int,
                eps: float = float("nan")) -> ErrorRecord:
    """(||q - q_c||_{H^{s+1}}, ||u - u_c||_{H^s}, ||theta - theta_c||_{H^s})."""
    q_c, u_c, theta_c = corrector_triple
    return ErrorRecord(
        eps=eps,
        e_q=sobolev_norm(state.q - q_c, s + 1),
        e_u=sobolev_norm(state.u - u_c, s),
        e_theta=sobolev_norm(state.theta - theta_c, s),
        s=s,
        t=state.time,
    )


# --- compact-subdomain L2 -------------------------------------------------------


@dataclass(frozen=True)
class Subdomain:
    """Axis-aligned box; z-range must stay strictly inside (0, 1)."""

    x_range: tuple = None  # None = full periodic extent
    y_range: tuple = None
    z_range: tuple = (0.25, 0.75)

    def __post_init__(self):
        z0, z1 = self.z_range
        if not 0.0 < z0 < z1 < 1.0:
            raise ValueError(
                f"subdomain must be strictly inside the slab, got z = {self.z_range}")

    def mask(self, grid: SlabGrid) -> np.ndarray:
        x = grid.x
        z = grid.z
        mask = np.ones((grid.n_h, grid.n_h, grid.n_v), dtype=bool)
        if self.x_range is not None:
            mask &= ((x >= self.x_range[0]) & (x <= self.x_range[1]))[:, None, None]
        if self.y_range is not None:
            mask &= ((x >= self.y_range[0]) & (x <= self.y_range[1]))[None, :, None]
        mask &= ((z >= self.z_range[0]) & (z <= self.z_range[1]))[None, None, :]
        return mask


def subdomain_l2(f: ScalarField, sub: Subdomain) -> float:
    grid = f.grid
    vals = to_physical(f)
    return float(np.sqrt(np.sum(vals[sub.mask(grid)] ** 2) * grid.cell_volume))


def compact_l2_error(u_eps: VectorField, sigma_limit, sub: Subdomain) -> float:
    """L2 over the box of u_eps - (perp_grad sigma, 0), physical quadrature."""
    grid = u_eps.grid
    w1, w2 = perp_grad(sigma_limit.sigma if hasattr(sigma_limit, "sigma")
                       else sigma_limit)
    w1p = to_physical2d(w1)[:, :, None]
    w2p = to_physical2d(w2)[:, :, None]
    mask = sub.mask(grid)
    d1 = to_physical(u_eps.components[0]) - w1p
    d2 = to_physical(u_eps.components[1]) - w2p
    d3 = to_physical(u_eps.components[2])
    total = sum(np.sum(d[mask] ** 2) for d in (d1, d2, d3))
    return float(np.sqrt(total * grid.cell_volume))


# --- rate regression -------------------------------------------------------------


def fit_rate(records) -> tuple:
    """OLS of log(error) on log(eps): returns (slope, intercept, residual).

    Nonpositive errors are excluded with a warning; fewer than 3 usable
    points is an error.  The residual is the RMS of the log-residuals.
    """
    eps = []
    err = []
    for e, v in records:
        if v <= 0:
            warnings.warn(f"fit_rate: dropping nonpositive error at eps = {e}")
            continue
        eps.append(float(e))
        err.append(float(v))
    if len(eps) < 3:
        raise ValueError(f"fit_rate needs >= 3 usable points, got {len(eps)}")
    x = np.log(np.asarray(eps))
    y = np.log(np.asarray(err))
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return float(slope), float(intercept), resid
