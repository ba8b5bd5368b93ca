"""Config parsing, initial data, sweep isolation, output determinism, CLI."""

import json
import os
import xml.etree.ElementTree as ET

import pytest

from nsklim.harness import (
    ConfigError,
    RunConfig,
    config_hash,
    emit_outputs,
    parse_config,
    run_acoustic_spectrum,
    run_alpha_zero_rate,
    run_experiment,
    run_rage_decay,
)
from nsklim.initial import InitialSpec, generate_initial, well_prepared_base
from nsklim.integrate import IntegratorConfig, write_checkpoint
from nsklim.limits import corrector
from nsklim.model import NskParams, stack_state
from nsklim.slab import SlabGrid, sobolev_norm

GRID = SlabGrid(n_h=16, n_v=4)

TINY_CONFIG = """
experiment = "AlphaZeroRate"
output_dir = "{out}"
eps_list = [0.4, 0.2, 0.1]
s = 1

[grid]
n_h = 16
n_v = 4

[params]
mu = 0.3
lam = 1.0

[integrator]
scheme = "IFRK2"
dt_max = 0.025
t_end = 0.05
observe_every = 2

[initial]
kind = "WellPreparedGeostrophic"
seed = 7
spectrum_decay = 6.0
"""


class TestConfig:
    def test_parse_round_trip(self):
        cfg = parse_config(TINY_CONFIG.format(out="x"))
        assert cfg.experiment == "AlphaZeroRate"
        assert cfg.grid == SlabGrid(n_h=16, n_v=4)
        assert cfg.integrator.scheme == "IFRK2"
        assert cfg.eps_list == (0.4, 0.2, 0.1)
        assert cfg.initial.kind == "WellPreparedGeostrophic"

    def test_bad_experiment(self):
        with pytest.raises(ConfigError):
            parse_config('experiment = "Nope"')

    def test_eps_list_validation(self):
        with pytest.raises(ConfigError):
            RunConfig(experiment="RageDecay", eps_list=())
        with pytest.raises(ConfigError):
            RunConfig(experiment="RageDecay", eps_list=(0.1, 0.2))
        with pytest.raises(ConfigError):
            RunConfig(experiment="RageDecay", eps_list=(1.5, 0.2))

    def test_invalid_toml(self):
        with pytest.raises(ConfigError):
            parse_config("experiment = [unclosed")

    def test_hash_stable(self):
        cfg = parse_config(TINY_CONFIG.format(out="x"))
        assert config_hash(cfg) == config_hash(cfg)


class TestInitialData:
    def test_deterministic(self):
        spec = InitialSpec(kind="IllPreparedRandom", seed=42)
        a = generate_initial(spec, GRID, 0.2)
        b = generate_initial(spec, GRID, 0.2)
        assert stack_state(a).tobytes() == stack_state(b).tobytes()

    def test_ill_prepared_eps_independent(self):
        spec = InitialSpec(kind="IllPreparedRandom", seed=1)
        norms = [sobolev_norm(generate_initial(spec, GRID, e).q, 3)
                 for e in (0.4, 0.2, 0.1, 0.05)]
        assert max(norms) / min(norms) == 1.0  # exactly: same state per eps

    def test_decay_parameter_guard(self):
        with pytest.raises(ValueError):
            InitialSpec(kind="IllPreparedRandom", spectrum_decay=1.5)

    def test_well_prepared_o_eps_condition(self):
        spec = InitialSpec(kind="WellPreparedGeostrophic", seed=3)
        base = well_prepared_base(spec, GRID)
        ratios = []
        for eps in (0.4, 0.1, 0.05):
            state = generate_initial(spec, GRID, eps)
            qc, uc, thetac = corrector(base, eps, GRID)
            ratios.append(sobolev_norm(state.u - uc, 1) / eps)
            # q and theta sit exactly on the corrector
            assert sobolev_norm(state.q - qc, 1) < 1e-14
            assert sobolev_norm(state.theta - thetac, 1) < 1e-14
        assert max(ratios) - min(ratios) < 1e-10 * max(ratios)

    def test_from_checkpoint(self, tmp_path):
        state = generate_initial(InitialSpec(kind="TaylorGreen"), GRID, 0.1)
        path = tmp_path / "tg.nskchk"
        write_checkpoint(str(path), state, NskParams(epsilon=0.1))
        spec = InitialSpec(kind="FromCheckpoint", path=str(path))
        loaded = generate_initial(spec, GRID, 0.1)
        assert stack_state(loaded).tobytes() == stack_state(state).tobytes()

    def test_from_checkpoint_requires_path(self):
        with pytest.raises(ValueError):
            InitialSpec(kind="FromCheckpoint")


def tiny_cfg(outdir):
    return parse_config(TINY_CONFIG.format(out=outdir))


class TestSweep:
    def test_determinism_results_json(self, tmp_path):
        blobs = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            cfg = tiny_cfg(str(out))
            record = run_experiment(cfg)
            emit_outputs(record, str(out))
            blobs.append((out / "results.json").read_bytes())
        assert blobs[0] == blobs[1]

    def test_per_eps_failure_isolated(self, tmp_path):
        # at eps = 1 the q0 = eps^2 pi0 draw breaks positivity immediately
        # (rho = 1 + pi0, min pi0 < -0.9); the smaller eps runs are unaffected
        cfg = RunConfig(
            experiment="AlphaZeroRate",
            grid=GRID,
            phys={"mu": 0.3},
            integrator=IntegratorConfig(dt_max=0.025, t_end=0.05,
                                        observe_every=2),
            eps_list=(1.0, 0.2, 0.1),
            initial=InitialSpec(kind="WellPreparedGeostrophic", seed=7,
                                spectrum_decay=6.0, amp_u=3.0,
                                perturbation_amp=0.1),
            s=1,
        )
        record = run_alpha_zero_rate(cfg)
        statuses = [r["status"] for r in record.runs]
        assert statuses[0] == "failed"
        assert statuses[1] == statuses[2] == "ok"
        assert record.any_failed

    def test_observer_final_state_sampled(self, tmp_path):
        cfg = tiny_cfg(str(tmp_path))
        record = run_experiment(cfg)
        for r in record.runs:
            assert r["error_records"][-1]["t"] == pytest.approx(0.05, abs=1e-12)

    def test_single_eps_zero_horizon(self):
        # degenerate sweep: one eps, t_end = 0 -> initial diagnostics only
        cfg = RunConfig(
            experiment="AlphaZeroRate",
            grid=GRID,
            phys={"mu": 0.3},
            integrator=IntegratorConfig(dt_max=0.025, t_end=0.0),
            eps_list=(0.2,),
            initial=InitialSpec(kind="WellPreparedGeostrophic", seed=7,
                                spectrum_decay=6.0),
            s=1,
        )
        record = run_alpha_zero_rate(cfg)
        (entry,) = record.runs
        assert entry["status"] == "ok"
        assert entry["steps"] == 0
        assert [r["t"] for r in entry["error_records"]] == [0.0]
        assert record.rates == {}  # too few points to fit


class TestEmitOutputs:
    def test_files_schema_complete_for_empty_record(self, tmp_path):
        from nsklim.harness import SweepRecord

        record = SweepRecord("RageDecay", "0" * 64)
        emit_outputs(record, str(tmp_path))
        data = json.loads((tmp_path / "results.json").read_text())
        assert data["schema_version"] == 1
        assert (tmp_path / "errors.csv").read_text().splitlines()[0] == \
            "eps,t,e_q,e_u,e_theta,s"
        assert (tmp_path / "rates.csv").read_text().splitlines()[0] == \
            "quantity,slope,intercept,residual"
        for svg in ("error_vs_eps.svg", "energy_timelines.svg",
                    "rage_decay.svg"):
            ET.parse(tmp_path / svg)  # well-formed XML

    def test_full_outputs_and_golden_csv(self, tmp_path):
        cfg = tiny_cfg(str(tmp_path))
        record = run_experiment(cfg)
        emit_outputs(record, str(tmp_path), config_text="# archived")
        assert (tmp_path / "config.toml").read_text() == "# archived"
        golden = os.path.join(os.path.dirname(__file__), "golden",
                              "tiny_errors.csv")
        produced = (tmp_path / "errors.csv").read_bytes()
        with open(golden, "rb") as fh:
            assert produced == fh.read()

    def test_spectrum_outputs(self, tmp_path):
        cfg = RunConfig(experiment="AcousticSpectrum", max_mode=3)
        record = run_acoustic_spectrum(cfg)
        assert record.spectrum["max_set_distance"] < 1e-12
        assert record.spectrum["kernel_zero_at_every_k0_mode"]
        emit_outputs(record, str(tmp_path))
        lines = (tmp_path / "spectrum.csv").read_text().splitlines()
        assert lines[0].startswith("xi1,xi2,k,mu_plus,mu_minus")
        assert len(lines) > 20

    def test_rage_outputs(self, tmp_path):
        cfg = RunConfig(experiment="RageDecay", grid=GRID,
                        rage_taus=(1.0, 2.0, 4.0), rage_eps=0.1, rage_M=4.0)
        record = run_rage_decay(cfg)
        assert record.rage["slope"] < 0
        emit_outputs(record, str(tmp_path))
        rates = (tmp_path / "rates.csv").read_text()
        assert "rage_decay" in rates


class TestCli:
    def test_run_and_exit_codes(self, tmp_path):
        from nsklim.cli import main

        cfg_path = tmp_path / "cfg.toml"
        out = tmp_path / "out"
        cfg_path.write_text(TINY_CONFIG.format(out=str(out)))
        assert main(["run", str(cfg_path)]) == 0
        assert (out / "results.json").exists()

    def test_config_error_exit_code(self, tmp_path):
        from nsklim.cli import main

        bad = tmp_path / "bad.toml"
        bad.write_text('experiment = "Nope"')
        assert main(["run", str(bad)]) == 2
        assert main(["run", str(tmp_path / "missing.toml")]) == 2

    def test_check_command(self):
        from nsklim.cli import main

        assert main(["check"]) == 0

    def test_spectrum_command(self, tmp_path):
        from nsklim.cli import main

        assert main(["spectrum", "--max-mode", "3", "--out",
                     str(tmp_path / "spec")]) == 0

    def test_rage_command(self, tmp_path):
        from nsklim.cli import main

        out = tmp_path / "rage"
        assert main(["rage", "--eps", "0.1", "--tau-list", "1,2,4",
                     "--out", str(out)]) == 0
        assert (out / "results.json").exists()

    def test_threads_env_respected(self, tmp_path, monkeypatch):
        monkeypatch.setenv("NSKLIM_THREADS", "1")
        cfg = tiny_cfg(str(tmp_path))
        record = run_experiment(cfg)
        assert all(r["status"] == "ok" for r in record.runs)
