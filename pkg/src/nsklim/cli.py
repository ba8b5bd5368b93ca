"""Command-line entry point.

    nsklim run <config.toml>         run a configured experiment sweep
    nsklim spectrum --max-mode M     acoustic eigenvalue oracle comparison
    nsklim rage --eps E --tau-list   RAGE time-average decay sweep
    nsklim check                     fast invariant suite

Exit codes: 0 success, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _cmd_run(args) -> int:
    from nsklim.harness import ConfigError, emit_outputs, parse_config, run_experiment

    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(text)
    except (ConfigError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    record = run_experiment(cfg)
    emit_outputs(record, cfg.output_dir, config_text=text)
    failed = [r for r in record.runs if r.get("status") != "ok"]
    for r in failed:
        print(f"eps = {r['eps']}: FAILED ({r.get('error')})", file=sys.stderr)
    print(f"wrote {cfg.output_dir}/results.json "
          f"({len(record.runs) - len(failed)}/{len(record.runs)} runs ok)")
    return EXIT_NUMERICAL if failed else EXIT_OK


def _cmd_spectrum(args) -> int:
    from nsklim.harness import RunConfig, emit_outputs, run_acoustic_spectrum

    cfg = RunConfig(experiment="AcousticSpectrum", max_mode=args.max_mode,
                    output_dir=args.out)
    record = run_acoustic_spectrum(cfg)
    emit_outputs(record, cfg.output_dir)
    worst = record.spectrum["max_set_distance"]
    print(f"max closed-form vs numeric distance: {worst:.3e} "
          f"(modes up to {args.max_mode})")
    print(f"kernel zero present at every k = 0 mode: "
          f"{record.spectrum['kernel_zero_at_every_k0_mode']}")
    return EXIT_OK if worst < 1e-12 else EXIT_NUMERICAL


def _cmd_rage(args) -> int:
    from nsklim.harness import RunConfig, emit_outputs, run_rage_decay
    from nsklim.initial import InitialSpec

    taus = tuple(float(t) for t in args.tau_list.split(","))
    cfg = RunConfig(experiment="RageDecay", rage_eps=args.eps, rage_M=args.M,
                    rage_taus=taus, output_dir=args.out,
                    initial=InitialSpec(seed=args.seed))
    record = run_rage_decay(cfg)
    emit_outputs(record, cfg.output_dir)
    print(f"decay slope {record.rage['slope']:.3f} over tau = {list(taus)}; "
          f"nonincreasing = {record.rage['nonincreasing']}")
    return EXIT_OK


def _cmd_check(_args) -> int:
    failures = 0
    for name, passed, detail in invariant_suite():
        print(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")
        failures += 0 if passed else 1
    return EXIT_OK if failures == 0 else EXIT_NUMERICAL


def invariant_suite():
    """Fast structural checks over the core operators; (name, ok, detail)."""
    from nsklim.acoustics import (
        AcousticSymbol,
        cutoff_projection_PM,
        eigenvalue_set_distance,
        eigenvalues_closed_form,
        eigenvalues_numeric,
        kernel_projection_Q,
        pair_h0_norm,
    )
    from nsklim.slab import (
        Parity,
        SlabGrid,
        curl,
        divergence,
        from_physical,
        gradient,
        random_scalar_field,
        random_velocity_field,
        sobolev_norm,
        to_physical,
    )

    grid = SlabGrid(n_h=16, n_v=8)
    rng = np.random.default_rng(0)
    f = random_scalar_field(grid, Parity.EVEN, rng)
    u = random_velocity_field(grid, rng)
    out = []

    back = from_physical(grid, to_physical(f), Parity.EVEN)
    err = np.abs(back.coeffs - f.coeffs).max()
    out.append(("transform round-trip", err < 1e-12, f"err = {err:.2e}"))

    quad = np.sqrt(np.sum(to_physical(f) ** 2) * grid.cell_volume)
    err = abs(sobolev_norm(f, 0) - quad)
    out.append(("Parseval", err < 1e-10, f"err = {err:.2e}"))

    cg = curl(gradient(f))
    err = max(np.abs(c.coeffs).max() for c in cg.components)
    out.append(("curl grad = 0", err < 1e-12, f"err = {err:.2e}"))

    err = np.abs(divergence(curl(u)).coeffs).max()
    out.append(("div curl = 0", err < 1e-12, f"err = {err:.2e}"))

    sigma = random_scalar_field(grid, Parity.EVEN, rng)
    g = kernel_projection_Q(sigma, u)
    gg = kernel_projection_Q(*g)
    err = pair_h0_norm(gg[0] - g[0], gg[1] - g[1])
    out.append(("Q idempotent", err < 1e-12, f"err = {err:.2e}"))

    a = kernel_projection_Q(*cutoff_projection_PM(sigma, u, 4.0))
    b = cutoff_projection_PM(*kernel_projection_Q(sigma, u), 4.0)
    err = pair_h0_norm(a[0] - b[0], a[1] - b[1])
    out.append(("[P_M, Q] = 0", err < 1e-12, f"err = {err:.2e}"))

    worst = 0.0
    for j1 in range(-4, 5, 2):
        for k in range(0, 5):
            worst = max(worst, eigenvalue_set_distance(
                eigenvalues_closed_form((j1, 1, k)),
                eigenvalues_numeric(AcousticSymbol((j1, 1), k))))
    out.append(("acoustic spectrum oracle", worst < 1e-12,
                f"max distance = {worst:.2e}"))
    return out


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="nsklim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a configured experiment")
    p_run.add_argument("config")
    p_run.set_defaults(func=_cmd_run)

    p_spec = sub.add_parser("spectrum", help="acoustic spectrum oracle check")
    p_spec.add_argument("--max-mode", type=int, default=8)
    p_spec.add_argument("--out", default="out_spectrum")
    p_spec.set_defaults(func=_cmd_spectrum)

    p_rage = sub.add_parser("rage", help="RAGE decay sweep")
    p_rage.add_argument("--eps", type=float, default=0.1)
    p_rage.add_argument("--tau-list", default="1,2,4,8")
    p_rage.add_argument("--M", type=float, default=4.0)
    p_rage.add_argument("--seed", type=int, default=0)
    p_rage.add_argument("--out", default="out_rage")
    p_rage.set_defaults(func=_cmd_rage)

    p_check = sub.add_parser("check", help="run the invariant suite")
    p_check.set_defaults(func=_cmd_check)

    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
