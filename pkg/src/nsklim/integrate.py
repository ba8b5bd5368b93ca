"""Integrating-factor Runge-Kutta time stepping for the NSK system.

The stiff linear symbol is integrated exactly through its cached per-mode
matrix exponential (StiffPropagator), so the acoustic/rotation/capillary
oscillations impose no step-size restriction; only the advective CFL and
dt_max limit the step.  The nonlinear remainder is treated at RK order 2
(midpoint) or 4 (classical), applied to the integrating-factor variable.
"""

from __future__ import annotations

import json
import struct
import time as _time
from dataclasses import dataclass, field

import numpy as np

from nsklim.model import (
    NskParams,
    NskState,
    PositivityError,
    StiffPropagator,
    nonlinear_rhs,
    stack_state,
    unstack_state,
)
from nsklim.slab import SlabGrid, to_physical

SCHEMES = ("IFRK2", "IFRK4")


@dataclass(frozen=True)
class IntegratorConfig:
    scheme: str = "IFRK4"
    cfl: float = 0.5
    dt_max: float = 0.05
    t_end: float = 0.5
    checkpoint_every: int = 0  # steps; 0 = off
    observe_every: int = 10

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if not 0 < self.cfl <= 1:
            raise ValueError("cfl must lie in (0, 1]")
        if self.dt_max <= 0:
            raise ValueError("dt_max must be positive")
        if self.checkpoint_every < 0 or self.observe_every <= 0:
            raise ValueError("cadences must be nonnegative / positive")


class IntegrationError(RuntimeError):
    """Step rejection cascade exhausted; carries the failure diagnostics."""

    def __init__(self, message, time, dt_history, cause=None):
        self.time = time
        self.dt_history = dt_history
        self.cause = cause
        super().__init__(message)


def _default_nonlinear(params: NskParams):
    def fn(stacked: np.ndarray, grid: SlabGrid, t: float) -> np.ndarray:
        state = unstack_state(grid, stacked, t)
        nq, nu_, ntheta = nonlinear_rhs(state, params)
        return stack_state(NskState(nq, nu_, ntheta, t))

    return fn


def _ifrk_step(stacked, t, dt, prop: StiffPropagator, nonlinear, scheme: str):
    grid = prop.grid
    E = prop.expm(dt)
    E2 = prop.expm(dt / 2.0)
    g1 = nonlinear(stacked, grid, t)
    if scheme == "IFRK2":
        mid = prop.apply(E2, stacked + (dt / 2.0) * g1)
        n_mid = nonlinear(mid, grid, t + dt / 2.0)
        return prop.apply(E, stacked) + dt * prop.apply(E2, n_mid)
    # IFRK4: classical RK4 in the integrating-factor variable
    s2 = prop.apply(E2, stacked + (dt / 2.0) * g1)
    n2 = nonlinear(s2, grid, t + dt / 2.0)
    s3 = prop.apply(E2, stacked) + (dt / 2.0) * n2
    n3 = nonlinear(s3, grid, t + dt / 2.0)
    s4 = prop.apply(E, stacked) + dt * prop.apply(E2, n3)
    n4 = nonlinear(s4, grid, t + dt)
    return prop.apply(E, stacked) + (dt / 6.0) * (
        prop.apply(E, g1) + 2.0 * prop.apply(E2, n2 + n3) + n4)


def _step_counted(state: NskState, params: NskParams, cfg: IntegratorConfig,
                  dt: float, prop: StiffPropagator, nonlinear,
                  max_retries: int = 10):
    stacked = stack_state(state)
    tried = []
    rejections = 0
    remaining = dt
    current = state
    sub = stacked
    # a rejected substep halves dt but still must cover the full interval
    while remaining > 1e-15:
        h = min(dt, remaining)
        for attempt in range(max_retries + 1):
            tried.append(h)
            try:
                out = _ifrk_step(sub, current.time, h, prop, nonlinear, cfg.scheme)
                # reject steps that went unstable without tripping positivity
                if not np.all(np.isfinite(out)):
                    raise PositivityError(float("nan"), (0, 0, 0), current.time)
                sub = out
                current = unstack_state(state.grid, out, current.time + h)
                remaining -= h
                break
            except PositivityError as err:
                rejections += 1
                h /= 2.0
                if attempt == max_retries:
                    raise IntegrationError(
                        f"step rejected {max_retries + 1} times at t = "
                        f"{current.time:.6g}: {err}", current.time, tried, err)
    return current, rejections


def step(state: NskState, params: NskParams, cfg: IntegratorConfig, dt: float,
         propagator: StiffPropagator = None, nonlinear=None,
         max_retries: int = 10) -> NskState:
    """Advance one step; on positivity failure halve dt and retry (bounded)."""
    if dt > cfg.dt_max + 1e-15:
        raise ValueError("dt exceeds dt_max")
    prop = propagator or StiffPropagator(state.grid, params)
    nl = nonlinear or _default_nonlinear(params)
    out, _ = _step_counted(state, params, cfg, dt, prop, nl, max_retries)
    return out


def _advective_dt(state: NskState, params: NskParams, cfg: IntegratorConfig) -> float:
    """CFL-limited dt, quantized to dt_max / 2^j so the expm cache is reused.

    Not restricted by 1/eps: the stiff oscillations live inside the exact
    exponential.
    """
    grid = state.grid
    u_h = max(np.abs(to_physical(state.u.components[0])).max(),
              np.abs(to_physical(state.u.components[1])).max())
    u_z = np.abs(to_physical(state.u.components[2])).max()
    dx_h = 2 * np.pi * grid.l_h / grid.n_h
    dz = 1.0 / grid.n_v
    limit = np.inf
    if u_h > 0:
        limit = min(limit, dx_h / u_h)
    if u_z > 0:
        limit = min(limit, dz / u_z)
    dt_cfl = cfg.cfl * limit
    if dt_cfl >= cfg.dt_max:
        return cfg.dt_max
    j = int(np.ceil(np.log2(cfg.dt_max / dt_cfl)))
    return cfg.dt_max / 2**j


@dataclass
class RunSummary:
    final_state: NskState
    steps: int = 0
    rejections: int = 0
    observed_steps: list = field(default_factory=list)
    dts: list = field(default_factory=list)
    elapsed: float = 0.0


def run(initial: NskState, params: NskParams, cfg: IntegratorConfig,
        observers=(), propagator: StiffPropagator = None,
        checkpoint_dir=None) -> RunSummary:
    """Integrate to cfg.t_end, observing every cfg.observe_every steps."""
    if cfg.t_end < initial.time:
        raise ValueError("t_end precedes the initial time")
    prop = propagator or StiffPropagator(initial.grid, params)
    nl = _default_nonlinear(params)
    summary = RunSummary(final_state=initial)
    t0 = _time.perf_counter()
    state = initial

    def maybe_observe(s, nstep):
        if nstep % cfg.observe_every == 0:
            summary.observed_steps.append(nstep)
            for obs in observers:
                obs(s, nstep)

    def maybe_checkpoint(s, nstep):
        if checkpoint_dir is not None and cfg.checkpoint_every and \
                nstep % cfg.checkpoint_every == 0:
            write_checkpoint(
                f"{checkpoint_dir}/ckpt_{nstep:06d}.nskchk", s, params)

    maybe_observe(state, 0)
    nstep = 0
    while state.time < cfg.t_end - 1e-12:
        dt = min(_advective_dt(state, params, cfg), cfg.t_end - state.time)
        try:
            state, rejected = _step_counted(state, params, cfg, dt, prop, nl)
        except IntegrationError:
            summary.elapsed = _time.perf_counter() - t0
            summary.final_state = state
            raise
        summary.rejections += rejected
        nstep += 1
        summary.steps = nstep
        summary.dts.append(dt)
        maybe_observe(state, nstep)
        maybe_checkpoint(state, nstep)
    summary.final_state = state
    summary.elapsed = _time.perf_counter() - t0
    return summary


# --- checkpoint container ------------------------------------------------------

CHECKPOINT_MAGIC = b"NSKLIMCK"
CHECKPOINT_VERSION = 1
_FIELD_NAMES = ("q", "u1", "u2", "u3", "theta")


def write_checkpoint(path, state: NskState, params: NskParams):
    """Self-describing container; raw little-endian complex128, bit-exact."""
    grid = state.grid
    header = {
        "format_version": CHECKPOINT_VERSION,
        "grid": {"n_h": grid.n_h, "n_v": grid.n_v, "l_h": grid.l_h,
                 "dealias_fraction": grid.dealias_fraction},
        "params": {
            "epsilon": params.epsilon, "alpha": int(params.alpha),
            "mu": params.mu, "nu": params.nu, "lam": params.lam,
            "kappa": params.kappa, "R": params.R, "c_v": params.c_v,
            "coriolis": params.coriolis,
        },
        "time": state.time,
        "arrays": [{"name": n, "shape": list(grid.coeff_shape), "dtype": "<c16"}
                   for n in _FIELD_NAMES],
    }
    blob = json.dumps(header, sort_keys=True).encode()
    stacked = stack_state(state).astype("<c16")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", CHECKPOINT_VERSION))
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for arr in stacked:
            fh.write(np.ascontiguousarray(arr).tobytes())


def read_checkpoint(path):
    """Returns (state, params); raises on magic/version mismatch."""
    from nsklim.model import Alpha

    with open(path, "rb") as fh:
        if fh.read(8) != CHECKPOINT_MAGIC:
            raise ValueError(f"{path} is not an nsklim checkpoint")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode())
        g = header["grid"]
        grid = SlabGrid(g["n_h"], g["n_v"], g["l_h"], g["dealias_fraction"])
        p = header["params"]
        params = NskParams(epsilon=p["epsilon"], alpha=Alpha(p["alpha"]),
                           mu=p["mu"], nu=p["nu"], lam=p["lam"],
                           kappa=p["kappa"], R=p["R"], c_v=p["c_v"],
                           coriolis=p["coriolis"])
        arrays = []
        for spec in header["arrays"]:
            count = int(np.prod(spec["shape"]))
            raw = fh.read(count * 16)
            arrays.append(np.frombuffer(raw, dtype="<c16").reshape(spec["shape"]))
    stacked = np.stack([a.astype(complex) for a in arrays])
    return unstack_state(grid, stacked, header["time"]), params
