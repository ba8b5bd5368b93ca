"""Batch orchestration: configs, eps-sweeps, persistence, plot emission.

Experiments
-----------
AlphaZeroRate   well-prepared data, alpha = 0 (Coriolis off, see README):
                corrector error norms per eps, fitted convergence rate, plus
                the corrector-residual scaling block.
AlphaOneLimit   ill-prepared data, alpha = 1: compact-subdomain L2 error of
                the velocity against the QG solution, energy telemetry.
AcousticSpectrum  closed-form vs numeric eigenvalues over a mode lattice.
RageDecay       time-averaged Q-perp norm over a tau sweep.
ResidualScaling the corrector-residual block standalone.

results.json is fully deterministic for a fixed config + seed; wall-clock
timings go to timings.json, which is excluded from that guarantee.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from nsklim.acoustics import (
    AcousticSymbol,
    acoustic_mu,
    cutoff_projection_PM,
    eigenvalue_set_distance,
    eigenvalues_closed_form,
    eigenvalues_numeric,
    rage_average,
)
from nsklim.diagnostics import (
    EnergyTracker,
    Subdomain,
    compact_l2_error,
    error_norms,
    fit_rate,
)
from nsklim.initial import InitialSpec, generate_initial, well_prepared_base
from nsklim.integrate import IntegratorConfig, run
from nsklim.limits import (
    EulerTrajectory,
    QgState,
    QgTrajectory,
    SigmaSign,
    corrector,
    residual_norms,
    solve_initial_sigma,
)
from nsklim.model import Alpha, NskParams
from nsklim.slab import (
    Parity,
    SlabGrid,
    random_scalar_field,
    random_velocity_field,
)

SCHEMA_VERSION = 1
EXPERIMENTS = ("AlphaOneLimit", "AlphaZeroRate", "AcousticSpectrum",
               "RageDecay", "ResidualScaling")


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


@dataclass(frozen=True)
class RunConfig:
    experiment: str
    grid: SlabGrid = SlabGrid(n_h=32, n_v=8)
    phys: dict = field(default_factory=dict)  # mu, nu, lam, kappa, R, c_v
    integrator: IntegratorConfig = IntegratorConfig()
    eps_list: tuple = (0.4, 0.2, 0.1, 0.05)
    initial: InitialSpec = InitialSpec()
    output_dir: str = "out"
    s: int = 2
    qg_dt: float = 5e-3
    euler_dt: float = 5e-3
    subdomain_z: tuple = (0.25, 0.75)
    rage_M: float = 4.0
    rage_taus: tuple = (1.0, 2.0, 4.0, 8.0)
    rage_eps: float = 0.1
    max_mode: int = 8

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        eps = tuple(self.eps_list)
        if not eps:
            raise ConfigError("eps_list must be nonempty")
        if any(not 0 < e <= 1 for e in eps):
            raise ConfigError("eps values must lie in (0, 1]")
        if any(a <= b for a, b in zip(eps, eps[1:])):
            raise ConfigError("eps_list must be strictly decreasing")

    def params_for(self, eps: float, alpha: Alpha, coriolis: float) -> NskParams:
        return NskParams(epsilon=eps, alpha=alpha, coriolis=coriolis,
                         **self.phys)

    @property
    def subdomain(self) -> Subdomain:
        return Subdomain(z_range=tuple(self.subdomain_z))


def config_hash(cfg: RunConfig) -> str:
    """Semantic hash: output_dir does not influence the computed results."""
    payload = asdict(cfg)
    payload.pop("output_dir", None)
    blob = json.dumps(_jsonable(payload), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Alpha):
        return int(obj)
    return obj


@dataclass
class SweepRecord:
    experiment: str
    config_hash: str
    schema_version: int = SCHEMA_VERSION
    eps_list: tuple = ()
    s: int = 2
    runs: list = field(default_factory=list)  # one dict per eps, in order
    rates: dict = field(default_factory=dict)
    residual_block: dict = field(default_factory=dict)
    spectrum: dict = field(default_factory=dict)
    rage: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)  # separate file, not hashed

    @property
    def any_failed(self) -> bool:
        return any(r.get("status") != "ok" for r in self.runs)

    def to_results_dict(self) -> dict:
        return _jsonable({
            "schema_version": self.schema_version,
            "experiment": self.experiment,
            "config_hash": self.config_hash,
            "eps_list": list(self.eps_list),
            "s": self.s,
            "runs": self.runs,
            "rates": self.rates,
            "residual_block": self.residual_block,
            "spectrum": self.spectrum,
            "rage": self.rage,
        })


# --- experiment workers ---------------------------------------------------------


def _worker_count(n_jobs: int) -> int:
    env = os.environ.get("NSKLIM_THREADS", "")
    if env.strip():
        return max(1, min(int(env), n_jobs))
    return max(1, min(os.cpu_count() or 1, n_jobs))


def _sweep(cfg: RunConfig, worker):
    """Run `worker(eps)` for each eps (parallel); failures stay per-eps."""
    results = [None] * len(cfg.eps_list)

    def guarded(i_eps):
        i, eps = i_eps
        try:
            results[i] = worker(eps)
            results[i]["status"] = "ok"
        except Exception as exc:  # failure isolation per sweep entry
            results[i] = {"eps": eps, "status": "failed",
                          "error": f"{type(exc).__name__}: {exc}"}

    jobs = list(enumerate(cfg.eps_list))
    workers = _worker_count(len(jobs))
    if workers == 1:
        for job in jobs:
            guarded(job)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(guarded, jobs))
    return results


def _error_record_dict(rec) -> dict:
    return {"eps": rec.eps, "t": rec.t, "e_q": rec.e_q, "e_u": rec.e_u,
            "e_theta": rec.e_theta, "s": rec.s}


def _energy_dicts(tracker: EnergyTracker):
    return [{"time": r.time, "terms": r.terms, "flags": r.flags}
            for r in tracker.reports]


def run_alpha_zero_rate(cfg: RunConfig) -> SweepRecord:
    """Corrector-error rate measurement (see README on the Coriolis term)."""
    if cfg.initial.kind != "WellPreparedGeostrophic":
        raise ConfigError("AlphaZeroRate requires WellPreparedGeostrophic data")
    record = SweepRecord("AlphaZeroRate", config_hash(cfg),
                         eps_list=tuple(cfg.eps_list), s=cfg.s)
    base = well_prepared_base(cfg.initial, cfg.grid)

    def worker(eps):
        params = cfg.params_for(eps, Alpha.ZERO, coriolis=0.0)
        state = generate_initial(cfg.initial, cfg.grid, eps)
        traj = EulerTrajectory(base, dt=cfg.euler_dt)
        tracker = EnergyTracker(params)
        records = []

        def observe(s, n):
            w_state = traj.state_at(s.time)
            records.append(error_norms(
                s, corrector(w_state, eps, cfg.grid), cfg.s, eps))
            tracker(s, n)

        summary = run(state, params, cfg.integrator, observers=[observe])
        final = summary.final_state
        if not records or abs(records[-1].t - final.time) > 1e-12:
            w_state = traj.state_at(final.time)
            records.append(error_norms(
                final, corrector(w_state, eps, cfg.grid), cfg.s, eps))
        sup = {
            "e_q": max(r.e_q for r in records),
            "e_u": max(r.e_u for r in records),
            "e_theta": max(r.e_theta for r in records),
        }
        sup["total"] = sup["e_q"] + sup["e_u"] + sup["e_theta"]
        return {
            "eps": eps,
            "error_records": [_error_record_dict(r) for r in records],
            "sup_errors": sup,
            "energy": _energy_dicts(tracker),
            "growth_flags": tracker.growth_flags(),
            "steps": summary.steps,
            "rejections": summary.rejections,
            "elapsed": summary.elapsed,
        }

    record.runs = _sweep(cfg, worker)
    ok = [r for r in record.runs if r["status"] == "ok"]
    if len(ok) >= 3:
        for key in ("e_q", "e_u", "e_theta", "total"):
            pts = [(r["eps"], r["sup_errors"][key]) for r in ok]
            slope, intercept, resid = fit_rate(pts)
            record.rates[key] = {"slope": slope, "intercept": intercept,
                                 "residual": resid}
    record.residual_block = _residual_scaling_block(cfg, base)
    record.timings = {str(r["eps"]): r.pop("elapsed", None) for r in record.runs
                      if "elapsed" in r}
    return record


def _residual_scaling_block(cfg: RunConfig, base) -> dict:
    """R1-R3 H^s norms per eps, fitted slopes, and the R2 floor analysis."""
    phys = {"mu": cfg.phys.get("mu", 1.0), "lam": cfg.phys.get("lam", 1.0),
            "kappa": cfg.phys.get("kappa", 1.0)}
    traj = EulerTrajectory(base, dt=cfg.euler_dt)
    t_mid = cfg.integrator.t_end / 2.0
    w_state = traj.state_at(t_mid)
    derivs = traj.derivatives_at(t_mid)
    eps_arr = np.asarray(cfg.eps_list, dtype=float)
    norms = {"R1": [], "R2": [], "R3": []}
    for eps in eps_arr:
        r1, r2, r3 = residual_norms(w_state, derivs, eps, cfg.s, **phys)
        norms["R1"].append(r1)
        norms["R2"].append(r2)
        norms["R3"].append(r3)
    block = {"t": t_mid, "eps_list": list(eps_arr), "norms": norms, "rates": {}}
    if len(eps_arr) < 3:
        return block
    for key in ("R1", "R3"):
        slope, intercept, resid = fit_rate(list(zip(eps_arr, norms[key])))
        block["rates"][key] = {"slope": slope, "intercept": intercept,
                               "residual": resid}
    # R2 has an O(1) floor: detrend the linear eps-part, then compare ends
    a, b = np.polyfit(eps_arr, np.asarray(norms["R2"]), 1)  # v = a*eps + b
    detrended = np.asarray(norms["R2"]) - a * eps_arr
    block["r2_floor"] = {
        "linear_coefficient": float(a),
        "floor_estimate": float(b),
        "end_ratio_detrended": float(detrended[-1] / detrended[0]),
    }
    return block


def run_residual_scaling(cfg: RunConfig) -> SweepRecord:
    if cfg.initial.kind != "WellPreparedGeostrophic":
        raise ConfigError("ResidualScaling requires WellPreparedGeostrophic data")
    record = SweepRecord("ResidualScaling", config_hash(cfg),
                         eps_list=tuple(cfg.eps_list), s=cfg.s)
    base = well_prepared_base(cfg.initial, cfg.grid)
    record.residual_block = _residual_scaling_block(cfg, base)
    record.runs = [{"eps": e, "status": "ok"} for e in cfg.eps_list]
    return record


def run_alpha_one_limit(cfg: RunConfig) -> SweepRecord:
    """QG-limit measurement: compact L2 velocity error against the sigma run."""
    record = SweepRecord("AlphaOneLimit", config_hash(cfg),
                         eps_list=tuple(cfg.eps_list), s=cfg.s)
    state0 = generate_initial(cfg.initial, cfg.grid, cfg.eps_list[0])
    sigma0 = solve_initial_sigma(state0.u, state0.q + state0.theta,
                                 SigmaSign.MINUS_CONSISTENT)
    sub = cfg.subdomain

    def worker(eps):
        params = cfg.params_for(eps, Alpha.ONE, coriolis=1.0)
        state = generate_initial(cfg.initial, cfg.grid, eps)
        qg = QgTrajectory(QgState(sigma0), dt=cfg.qg_dt)
        tracker = EnergyTracker(params)
        series = []

        def observe(s, n):
            qg_state = qg.state_at(s.time)
            series.append({"t": s.time,
                           "value": compact_l2_error(s.u, qg_state, sub)})
            tracker(s, n)

        summary = run(state, params, cfg.integrator, observers=[observe])
        final = summary.final_state
        if not series or abs(series[-1]["t"] - final.time) > 1e-12:
            qg_state = qg.state_at(final.time)
            series.append({"t": final.time,
                           "value": compact_l2_error(final.u, qg_state, sub)})
        return {
            "eps": eps,
            "compact_series": series,
            "final_compact_error": series[-1]["value"],
            "energy": _energy_dicts(tracker),
            "growth_flags": tracker.growth_flags(),
            "steps": summary.steps,
            "rejections": summary.rejections,
            "elapsed": summary.elapsed,
        }

    record.runs = _sweep(cfg, worker)
    ok = [r for r in record.runs if r["status"] == "ok"]
    if len(ok) >= 3:
        pts = [(r["eps"], r["final_compact_error"]) for r in ok]
        slope, intercept, resid = fit_rate(pts)
        record.rates["compact_l2"] = {"slope": slope, "intercept": intercept,
                                      "residual": resid}
    finals = [r.get("final_compact_error") for r in record.runs
              if r["status"] == "ok"]
    record.rates["monotone_decreasing"] = {
        "value": float(all(b < a for a, b in zip(finals, finals[1:])))}
    if finals:
        record.rates["final_over_initial"] = {"value": finals[-1] / finals[0]}
    record.timings = {str(r["eps"]): r.pop("elapsed", None) for r in record.runs
                      if "elapsed" in r}
    return record


def run_acoustic_spectrum(cfg: RunConfig) -> SweepRecord:
    """Closed-form vs numeric eigenvalues over the integer mode lattice."""
    record = SweepRecord("AcousticSpectrum", config_hash(cfg),
                         eps_list=tuple(cfg.eps_list), s=cfg.s)
    M = cfg.max_mode
    rows = []
    worst = 0.0
    kernel_ok = True
    for j1 in range(-M, M + 1):
        for j2 in range(-M, M + 1):
            if np.hypot(j1, j2) > M + 1e-12:
                continue
            for k in range(0, M + 1):
                closed = eigenvalues_closed_form((j1, j2, k))
                numeric = eigenvalues_numeric(AcousticSymbol((j1, j2), k))
                dist = eigenvalue_set_distance(closed, numeric)
                worst = max(worst, dist)
                mu_p, mu_m = acoustic_mu((j1, j2, k))
                has_zero = bool(np.any(np.abs(numeric) < 1e-12))
                if k == 0 and not has_zero:
                    kernel_ok = False
                rows.append({
                    "xi1": j1, "xi2": j2, "k": k,
                    "mu_plus": mu_p, "mu_minus": mu_m,
                    "closed_imag": [float(v) for v in closed.imag],
                    "numeric_real": [float(v) for v in numeric.real],
                    "numeric_imag": [float(v) for v in numeric.imag],
                    "set_distance": dist,
                    "zero_eigenvalue_present": has_zero,
                })
    record.spectrum = {
        "max_mode": M,
        "normalization": "integer lattice: xi in Z^2, k in Z>=0 "
                         "(unit-k convention; the slab realizes k = m*pi)",
        "max_set_distance": worst,
        "kernel_zero_at_every_k0_mode": kernel_ok,
        "reconciliation": (
            "at k = 0 the minus branch mu_- vanishes identically in xi "
            "(the geostrophic kernel); the plus branch 1 + |xi|^2 varies "
            "with xi, so it forms no xi-uniform eigenvalue"),
        "rows": rows,
    }
    record.runs = [{"eps": e, "status": "ok"} for e in cfg.eps_list]
    return record


def run_rage_decay(cfg: RunConfig) -> SweepRecord:
    record = SweepRecord("RageDecay", config_hash(cfg),
                         eps_list=tuple(cfg.eps_list), s=cfg.s)
    rng = np.random.default_rng(cfg.initial.seed)
    sigma = random_scalar_field(cfg.grid, Parity.EVEN, rng,
                                cfg.initial.spectrum_decay, 1.0)
    U = random_velocity_field(cfg.grid, rng, cfg.initial.spectrum_decay, 1.0)
    sigma, U = cutoff_projection_PM(sigma, U, cfg.rage_M)
    norms = []
    for tau in cfg.rage_taus:
        res = rage_average(sigma, U, cfg.rage_M, tau, cfg.rage_eps)
        norms.append(res.norm)
    slope, intercept, resid = fit_rate(list(zip(cfg.rage_taus, norms)))
    record.rage = {
        "M": cfg.rage_M,
        "eps": cfg.rage_eps,
        "taus": list(cfg.rage_taus),
        "norms": norms,
        "slope": slope,
        "intercept": intercept,
        "residual": resid,
        "nonincreasing": bool(all(b <= a for a, b in zip(norms, norms[1:]))),
    }
    record.runs = [{"eps": cfg.rage_eps, "status": "ok"}]
    return record


_RUNNERS = {
    "AlphaZeroRate": run_alpha_zero_rate,
    "AlphaOneLimit": run_alpha_one_limit,
    "AcousticSpectrum": run_acoustic_spectrum,
    "RageDecay": run_rage_decay,
    "ResidualScaling": run_residual_scaling,
}


def run_experiment(cfg: RunConfig) -> SweepRecord:
    return _RUNNERS[cfg.experiment](cfg)


# --- config file parsing ----------------------------------------------------------


def _load_toml(text: str) -> dict:
    if sys.version_info >= (3, 11):
        import tomllib

        return tomllib.loads(text)
    import tomli

    return tomli.loads(text)


def parse_config(text: str) -> RunConfig:
    """Parse the dotted-key config format (a TOML subset) into a RunConfig."""
    try:
        raw = _load_toml(text)
    except Exception as exc:
        raise ConfigError(f"config is not valid TOML: {exc}") from None
    try:
        grid_kw = raw.get("grid", {})
        grid = SlabGrid(
            n_h=int(grid_kw.get("n_h", 32)),
            n_v=int(grid_kw.get("n_v", 8)),
            l_h=float(grid_kw.get("l_h", 1.0)),
            dealias_fraction=float(grid_kw.get("dealias_fraction", 2.0 / 3.0)),
        )
        integ_kw = raw.get("integrator", {})
        integrator = IntegratorConfig(
            scheme=integ_kw.get("scheme", "IFRK4"),
            cfl=float(integ_kw.get("cfl", 0.5)),
            dt_max=float(integ_kw.get("dt_max", 0.05)),
            t_end=float(integ_kw.get("t_end", 0.5)),
            checkpoint_every=int(integ_kw.get("checkpoint_every", 0)),
            observe_every=int(integ_kw.get("observe_every", 10)),
        )
        init_kw = raw.get("initial", {})
        initial = InitialSpec(
            kind=init_kw.get("kind", "IllPreparedRandom"),
            seed=int(init_kw.get("seed", 0)),
            spectrum_decay=float(init_kw.get("spectrum_decay", 4.0)),
            amp_q=float(init_kw.get("amp_q", 0.4)),
            amp_u=float(init_kw.get("amp_u", 1.0)),
            amp_theta=float(init_kw.get("amp_theta", 0.2)),
            amp_u_div=float(init_kw.get("amp_u_div", 0.3)),
            amp_u_vertical=float(init_kw.get("amp_u_vertical", 0.0)),
            perturbation_amp=float(init_kw.get("perturbation_amp", 0.3)),
            path=init_kw.get("path", ""),
        )
        opts = raw.get("experiment_options", {})
        cfg = RunConfig(
            experiment=raw["experiment"],
            grid=grid,
            phys={k: float(v) for k, v in raw.get("params", {}).items()},
            integrator=integrator,
            eps_list=tuple(float(e) for e in raw.get("eps_list",
                                                     (0.4, 0.2, 0.1, 0.05))),
            initial=initial,
            output_dir=raw.get("output_dir", "out"),
            s=int(raw.get("s", 2)),
            qg_dt=float(opts.get("qg_dt", 5e-3)),
            euler_dt=float(opts.get("euler_dt", 5e-3)),
            subdomain_z=tuple(opts.get("subdomain_z", (0.25, 0.75))),
            rage_M=float(opts.get("rage_M", 4.0)),
            rage_taus=tuple(float(t) for t in opts.get("rage_taus",
                                                       (1.0, 2.0, 4.0, 8.0))),
            rage_eps=float(opts.get("rage_eps", 0.1)),
            max_mode=int(opts.get("max_mode", 8)),
        )
    except ConfigError:
        raise
    except KeyError as exc:
        raise ConfigError(f"missing required config key: {exc}") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad config value: {exc}") from None
    return cfg


# --- output emission -----------------------------------------------------------


def _fmt(x) -> str:
    return f"{x:.17g}"


def emit_outputs(record: SweepRecord, outdir: str, config_text: str = None):
    """Write results.json, errors.csv, rates.csv, timings.json and SVG plots."""
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "results.json"), "w") as fh:
        json.dump(record.to_results_dict(), fh, sort_keys=True, indent=1)
        fh.write("\n")
    with open(os.path.join(outdir, "timings.json"), "w") as fh:
        json.dump(_jsonable(record.timings), fh, sort_keys=True, indent=1)
        fh.write("\n")
    if config_text is not None:
        with open(os.path.join(outdir, "config.toml"), "w") as fh:
            fh.write(config_text)

    with open(os.path.join(outdir, "errors.csv"), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["eps", "t", "e_q", "e_u", "e_theta", "s"])
        for entry in record.runs:
            for rec in entry.get("error_records", []):
                writer.writerow([_fmt(rec["eps"]), _fmt(rec["t"]),
                                 _fmt(rec["e_q"]), _fmt(rec["e_u"]),
                                 _fmt(rec["e_theta"]), rec["s"]])

    with open(os.path.join(outdir, "rates.csv"), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["quantity", "slope", "intercept", "residual"])
        for name, vals in sorted(record.rates.items()):
            if {"slope", "intercept", "residual"} <= set(vals):
                writer.writerow([name, _fmt(vals["slope"]),
                                 _fmt(vals["intercept"]),
                                 _fmt(vals["residual"])])
        for name, vals in sorted(record.residual_block.get("rates", {}).items()):
            writer.writerow([f"residual_{name}", _fmt(vals["slope"]),
                             _fmt(vals["intercept"]), _fmt(vals["residual"])])
        if record.rage:
            writer.writerow(["rage_decay", _fmt(record.rage["slope"]),
                             _fmt(record.rage["intercept"]),
                             _fmt(record.rage["residual"])])

    if record.spectrum:
        with open(os.path.join(outdir, "spectrum.csv"), "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(
                ["xi1", "xi2", "k", "mu_plus", "mu_minus"]
                + [f"closed_imag_{i}" for i in range(1, 5)]
                + [f"numeric_real_{i}" for i in range(1, 5)]
                + [f"numeric_imag_{i}" for i in range(1, 5)]
                + ["set_distance", "zero_eigenvalue_present"])
            for row in record.spectrum["rows"]:
                writer.writerow(
                    [row["xi1"], row["xi2"], row["k"],
                     _fmt(row["mu_plus"]), _fmt(row["mu_minus"])]
                    + [_fmt(v) for v in row["closed_imag"]]
                    + [_fmt(v) for v in row["numeric_real"]]
                    + [_fmt(v) for v in row["numeric_imag"]]
                    + [_fmt(row["set_distance"]),
                       int(row["zero_eigenvalue_present"])])

    _emit_plots(record, outdir)


def _emit_plots(record: SweepRecord, outdir: str):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    def save(fig, name):
        fig.savefig(os.path.join(outdir, name), format="svg",
                    metadata={"Date": None})
        plt.close(fig)

    # log-log error vs eps with the fitted line
    fig, ax = plt.subplots(figsize=(5, 4))
    drew = False
    ok = [r for r in record.runs if r.get("status") == "ok"]
    if record.experiment == "AlphaZeroRate" and ok:
        eps = [r["eps"] for r in ok]
        tot = [r["sup_errors"]["total"] for r in ok]
        ax.loglog(eps, tot, "o-", label="sup error")
        if "total" in record.rates:
            s, b = record.rates["total"]["slope"], record.rates["total"]["intercept"]
            xs = np.array(eps)
            ax.loglog(xs, np.exp(b) * xs**s, "--",
                      label=f"fit slope {s:.2f}")
        drew = True
    elif record.experiment == "AlphaOneLimit" and ok:
        eps = [r["eps"] for r in ok]
        vals = [r["final_compact_error"] for r in ok]
        ax.loglog(eps, vals, "o-", label="compact L2 error")
        drew = True
    if drew:
        ax.set_xlabel("eps")
        ax.set_ylabel("error")
        ax.legend()
    save(fig, "error_vs_eps.svg")

    # energy-term timelines
    fig, ax = plt.subplots(figsize=(6, 4))
    for r in ok:
        energy = r.get("energy", [])
        if not energy:
            continue
        times = [e["time"] for e in energy]
        for key in sorted(energy[0]["terms"]):
            if not key.startswith("sup_"):
                continue
            ax.plot(times, [e["terms"].get(key, np.nan) for e in energy],
                    label=f"eps={r['eps']}: {key}", lw=0.8)
        break  # one representative eps keeps the plot readable
    ax.set_xlabel("t")
    ax.set_ylabel("energy terms")
    if ax.lines:
        ax.legend(fontsize=5)
    save(fig, "energy_timelines.svg")

    # RAGE decay curve
    fig, ax = plt.subplots(figsize=(5, 4))
    if record.rage:
        ax.loglog(record.rage["taus"], record.rage["norms"], "o-")
        ax.set_xlabel("tau")
        ax.set_ylabel("averaged Q-perp norm")
    save(fig, "rage_decay.svg")
