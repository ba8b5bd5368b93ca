"""Integrating-factor stepping: exactness, order, step control, checkpoints."""

import numpy as np
import pytest

from nsklim.integrate import (
    IntegrationError,
    IntegratorConfig,
    read_checkpoint,
    run,
    step,
    write_checkpoint,
)
from nsklim.model import (
    Alpha,
    NskParams,
    NskState,
    PositivityError,
    StiffPropagator,
    stack_state,
)
from nsklim.slab import (
    Parity,
    SlabGrid,
    random_scalar_field,
    random_velocity_field,
    zero_scalar,
    zero_velocity,
)

GRID = SlabGrid(n_h=16, n_v=4)
PARAMS = NskParams(epsilon=0.5, alpha=Alpha.ONE, mu=0.5, nu=0.0, lam=0.5)


def random_state(seed=0, amp=0.2, grid=GRID, decay=6.0):
    rng = np.random.default_rng(seed)
    return NskState(
        random_scalar_field(grid, Parity.EVEN, rng, decay, amp),
        random_velocity_field(grid, rng, decay, amp),
        random_scalar_field(grid, Parity.EVEN, rng, decay, amp),
    )


ZERO_N = lambda stacked, grid, t: np.zeros_like(stacked)


class TestStep:
    def test_rest_state_fixed_point(self):
        state = NskState(zero_scalar(GRID, Parity.EVEN), zero_velocity(GRID),
                         zero_scalar(GRID, Parity.EVEN))
        cfg = IntegratorConfig(dt_max=0.05, t_end=1.0)
        out = step(state, PARAMS, cfg, 0.05)
        assert np.abs(stack_state(out)).max() == 0
        assert out.time == pytest.approx(0.05)

    def test_linear_subproblem_exact(self):
        # with the nonlinearity disabled the scheme is the exact exponential,
        # irrespective of the number of steps
        state = random_state(seed=1)
        prop = StiffPropagator(GRID, PARAMS)
        cfg = IntegratorConfig(dt_max=1.0, t_end=1.0)
        t_total = 0.4
        for nsteps in (1, 4, 16):
            cur = state
            dt = t_total / nsteps
            for _ in range(nsteps):
                cur = step(cur, PARAMS, cfg, dt, prop, nonlinear=ZERO_N)
            expected = prop.apply(prop.expm(t_total), stack_state(state))
            scale = np.abs(expected).max()
            assert np.abs(stack_state(cur) - expected).max() < 1e-10 * scale

    @pytest.mark.parametrize("scheme,order", [("IFRK2", 2.0), ("IFRK4", 4.0)])
    def test_self_convergence_order(self, scheme, order):
        state = random_state(seed=2, amp=0.3)
        prop = StiffPropagator(GRID, PARAMS)
        cfg = IntegratorConfig(scheme=scheme, dt_max=1.0, t_end=1.0)
        t_total = 0.1
        dts = [0.02, 0.01, 0.005]

        def integrate(dt):
            cur = state
            for _ in range(round(t_total / dt)):
                cur = step(cur, PARAMS, cfg, dt, prop)
            return stack_state(cur)

        ref = integrate(dts[-1] / 4)
        errs = [np.abs(integrate(dt) - ref).max() for dt in dts]
        slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
        assert slope == pytest.approx(order, abs=0.3)

    def test_rejection_cascade_raises_with_diagnostics(self):
        state = random_state(seed=3)
        cfg = IntegratorConfig(dt_max=0.1, t_end=1.0)

        def always_bad(stacked, grid, t):
            raise PositivityError(0.01, (0.0, 0.0, 0.5), t)

        with pytest.raises(IntegrationError) as err:
            step(state, PARAMS, cfg, 0.1, nonlinear=always_bad)
        assert len(err.value.dt_history) == 11  # initial try + 10 retries
        assert err.value.dt_history[-1] == pytest.approx(0.1 / 2**10)
        assert isinstance(err.value.cause, PositivityError)

    def test_dt_above_dt_max_rejected(self):
        state = random_state(seed=4)
        cfg = IntegratorConfig(dt_max=0.01, t_end=1.0)
        with pytest.raises(ValueError):
            step(state, PARAMS, cfg, 0.05)


class TestRun:
    def test_zero_horizon_returns_initial(self):
        state = random_state(seed=5)
        cfg = IntegratorConfig(dt_max=0.05, t_end=0.0)
        summary = run(state, PARAMS, cfg)
        assert summary.steps == 0
        assert summary.final_state is state
        assert summary.observed_steps == [0]

    def test_reaches_t_end(self):
        state = random_state(seed=6)
        cfg = IntegratorConfig(dt_max=0.05, t_end=0.3)
        summary = run(state, PARAMS, cfg)
        assert summary.final_state.time == pytest.approx(0.3, abs=1e-12)
        assert summary.rejections == 0

    def test_observer_cadence_count(self):
        state = random_state(seed=7)
        cfg = IntegratorConfig(dt_max=0.02, t_end=0.2, observe_every=3)
        seen = []
        summary = run(state, PARAMS, cfg, observers=[lambda s, n: seen.append(n)])
        assert len(seen) == summary.steps // 3 + 1
        assert seen == summary.observed_steps

    def test_uniform_in_eps_step_count(self):
        state = random_state(seed=8, amp=0.3)
        counts = {}
        for eps in (0.5, 0.05):
            params = NskParams(epsilon=eps, alpha=Alpha.ONE, mu=0.5, lam=0.5)
            cfg = IntegratorConfig(dt_max=0.05, t_end=0.2)
            counts[eps] = run(state, params, cfg).steps
        assert counts[0.05] <= 2 * counts[0.5]

    def test_checkpoints_written(self, tmp_path):
        state = random_state(seed=9)
        cfg = IntegratorConfig(dt_max=0.05, t_end=0.2, checkpoint_every=2)
        run(state, PARAMS, cfg, checkpoint_dir=str(tmp_path))
        files = sorted(tmp_path.glob("ckpt_*.nskchk"))
        assert files
        loaded, _ = read_checkpoint(str(files[0]))
        assert loaded.grid == GRID


class TestCheckpointFormat:
    def test_bit_exact_round_trip(self, tmp_path):
        state = random_state(seed=10)
        path = tmp_path / "state.nskchk"
        write_checkpoint(str(path), state, PARAMS)
        loaded, params = read_checkpoint(str(path))
        assert params == PARAMS
        assert loaded.time == state.time
        assert stack_state(loaded).tobytes() == stack_state(state).tobytes()
        # writing the loaded state again reproduces the file byte for byte
        path2 = tmp_path / "state2.nskchk"
        write_checkpoint(str(path2), loaded, params)
        assert path.read_bytes() == path2.read_bytes()

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.nskchk"
        path.write_bytes(b"NOTACKPT" + b"\0" * 64)
        with pytest.raises(ValueError):
            read_checkpoint(str(path))

    def test_config_validation(self):
        with pytest.raises(ValueError):
            IntegratorConfig(scheme="RK48")
        with pytest.raises(ValueError):
            IntegratorConfig(cfl=1.5)
        with pytest.raises(ValueError):
            IntegratorConfig(dt_max=-1)
