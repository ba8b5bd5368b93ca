"""Energy telemetry, error norms, compact-subdomain L2, rate regression."""

import numpy as np
import pytest

from nsklim.diagnostics import (
    EnergyReport,
    EnergyTracker,
    Subdomain,
    compact_l2_error,
    energy_functional,
    error_norms,
    fit_rate,
    subdomain_l2,
)
from nsklim.limits import QgState
from nsklim.model import Alpha, NskParams, NskState
from nsklim.plane import PlaneGrid, from_physical2d, perp_grad, random_field2d
from nsklim.slab import (
    Parity,
    ScalarField,
    SlabGrid,
    VectorField,
    from_physical,
    random_scalar_field,
    random_velocity_field,
    sobolev_norm,
    zero_scalar,
    zero_velocity,
)

GRID = SlabGrid(n_h=16, n_v=8)
PARAMS = NskParams(epsilon=0.2, alpha=Alpha.ONE, mu=0.5, lam=0.5)


def rest_state():
    return NskState(zero_scalar(GRID, Parity.EVEN), zero_velocity(GRID),
                    zero_scalar(GRID, Parity.EVEN))


def random_state(seed=0, amp=0.2):
    rng = np.random.default_rng(seed)
    return NskState(
        random_scalar_field(GRID, Parity.EVEN, rng, 4.0, amp),
        random_velocity_field(GRID, rng, 4.0, amp),
        random_scalar_field(GRID, Parity.EVEN, rng, 4.0, amp),
    )


class TestEnergyFunctional:
    def test_rest_state(self):
        report = energy_functional(rest_state(), PARAMS)
        for key, val in report.terms.items():
            if key == "sup_Linf(rho,rho_inv)":
                assert val == pytest.approx(1.0)
            else:
                assert val == pytest.approx(0.0, abs=1e-15)

    def test_single_mode_h2_weight(self):
        # H2 term of a single velocity mode equals the closed-form weight,
        # cross-checked through sobolev_norm
        c = GRID.zeros()
        c[2, 1, 1] = 0.25
        c[-2, -1, 1] = 0.25
        u1 = ScalarField(GRID, Parity.EVEN, c)
        state = NskState(zero_scalar(GRID, Parity.EVEN),
                         VectorField((u1, zero_scalar(GRID, Parity.EVEN),
                                      zero_scalar(GRID, Parity.ODD))),
                         zero_scalar(GRID, Parity.EVEN))
        report = energy_functional(state, PARAMS)
        weight = (1 + 2**2 + 1**2 + np.pi**2) ** 2
        expected = weight * 2 * 0.25**2 * 0.5 * GRID.volume  # two conj modes, w=1/2
        assert report.terms["sup_H2(u,rho_fluct,eps_q,eps_theta)"] == \
            pytest.approx(sobolev_norm(u1, 2) ** 2, rel=1e-12)
        assert report.terms["sup_H2(u,rho_fluct,eps_q,eps_theta)"] == \
            pytest.approx(expected, rel=1e-12)

    def test_validation_rejects_nan(self):
        with pytest.raises(ValueError):
            EnergyReport(0.0, {"bad": float("nan")}).validate()


class TestEnergyTracker:
    def test_t0_report_matches_direct_call(self):
        state = random_state(seed=1)
        tracker = EnergyTracker(PARAMS)
        tracked = tracker(state, 0)
        direct = energy_functional(state, PARAMS)
        for key, val in direct.terms.items():
            assert tracked.terms[key] == pytest.approx(val, rel=1e-12)

    def test_integrals_accumulate_and_second_derivatives_flagged(self):
        tracker = EnergyTracker(PARAMS)
        for i, t in enumerate((0.0, 0.05, 0.1)):
            state = random_state(seed=2 + i, amp=0.1)
            tracker(NskState(state.q, state.u, state.theta, t), i)
        final = tracker.reports[-1]
        assert final.terms["int_H2(q,theta)"] > 0
        mid = tracker.reports[1]
        assert "sup_L2(eps2_qtt,eps2_utt,eps2_thetatt)" in mid.terms
        assert mid.flags["second_derivatives_approximate"]
        assert mid.flags.get("H4_terms_omitted")  # n_h = 16 < 64

    def test_growth_flags(self):
        tracker = EnergyTracker(PARAMS)
        tracker.reports = [
            EnergyReport(0.0, {"sup_a": 1.0, "sup_b": 1e-12, "int_c": 0.0}),
            EnergyReport(1.0, {"sup_a": 5.0, "sup_b": 2e-12, "int_c": 100.0}),
        ]
        flags = tracker.growth_flags(factor=10.0)
        assert flags == {}
        tracker.reports.append(EnergyReport(2.0, {"sup_a": 11.0, "sup_b": 0.0,
                                                  "int_c": 500.0}))
        flags = tracker.growth_flags(factor=10.0)
        assert "sup_a" in flags and "int_c" not in flags


class TestErrorNorms:
    def test_zero_when_equal(self):
        state = random_state(seed=3)
        rec = error_norms(state, (state.q, state.u, state.theta), s=2, eps=0.1)
        assert rec.e_q == rec.e_u == rec.e_theta == 0.0
        assert rec.total == 0.0

    def test_single_mode_weight(self):
        state = rest_state()
        delta = 1e-3
        c = GRID.zeros()
        c[1, 2, 1] = delta / 2
        c[-1, -2, 1] = delta / 2
        bump = ScalarField(GRID, Parity.EVEN, c)
        pert = NskState(state.q, VectorField(
            (state.u.components[0] + bump, state.u.components[1],
             state.u.components[2])), state.theta)
        s = 2
        rec = error_norms(pert, (state.q, state.u, state.theta), s=s, eps=0.1)
        weight = (1 + 1 + 4 + np.pi**2) ** (s / 2)
        basis = np.sqrt(2 * (delta / 2) ** 2 * 0.5 * GRID.volume)
        assert rec.e_u == pytest.approx(weight * basis, rel=1e-12)
        assert rec.e_q == 0.0

    def test_linearity_in_perturbation(self):
        base = random_state(seed=4)
        d = random_state(seed=5, amp=0.01)
        triple = (base.q, base.u, base.theta)
        one = error_norms(NskState(base.q + d.q, base.u + d.u,
                                   base.theta + d.theta), triple, 2)
        two = error_norms(NskState(base.q + 2 * d.q, base.u + 2 * d.u,
                                   base.theta + 2 * d.theta), triple, 2)
        assert two.total == pytest.approx(2 * one.total, rel=1e-12)

    def test_triangle_inequality(self):
        a, b, c = (random_state(seed=s) for s in (6, 7, 8))
        tb = (b.q, b.u, b.theta)
        tc = (c.q, c.u, c.theta)
        ab = error_norms(a, tb, 1).total
        ac = error_norms(a, tc, 1).total
        cb = error_norms(c, tb, 1).total
        assert ab <= ac + cb + 1e-12


class TestCompactL2:
    def test_exact_geostrophic_velocity_gives_zero(self):
        pg = PlaneGrid.horizontal_of(GRID)
        sigma = random_field2d(pg, np.random.default_rng(9))
        w1, w2 = perp_grad(sigma)
        from nsklim.plane import embed_in_slab
        u = VectorField((embed_in_slab(w1, GRID), embed_in_slab(w2, GRID),
                         zero_scalar(GRID, Parity.ODD)))
        err = compact_l2_error(u, QgState(sigma), Subdomain())
        assert err < 1e-12

    def test_quadrature_matches_global_norm_for_supported_field(self):
        # field vanishing outside the box: masked quadrature = global L2
        sub = Subdomain(z_range=(0.25, 0.75))
        z = GRID.z
        bump = np.where((z >= 0.25) & (z <= 0.75), 1.0, 0.0)
        rng = np.random.default_rng(10)
        horiz = rng.standard_normal((GRID.n_h, GRID.n_h, 1))
        vals = horiz * bump[None, None, :]
        f = from_physical(GRID, vals, Parity.EVEN)
        u = VectorField((f, zero_scalar(GRID, Parity.EVEN),
                         zero_scalar(GRID, Parity.ODD)))
        pg = PlaneGrid.horizontal_of(GRID)
        zero_sigma = QgState(from_physical2d(pg, np.zeros((GRID.n_h, GRID.n_h))))
        masked = compact_l2_error(u, zero_sigma, sub)
        full = np.sqrt(np.sum(vals**2) * GRID.cell_volume)
        assert masked == pytest.approx(full, rel=1e-12)
        assert subdomain_l2(f, sub) == pytest.approx(full, rel=1e-12)

    def test_boundary_touching_subdomain_rejected(self):
        with pytest.raises(ValueError):
            Subdomain(z_range=(0.0, 0.5))
        with pytest.raises(ValueError):
            Subdomain(z_range=(0.25, 1.0))


class TestFitRate:
    def test_exact_linear_rate(self):
        eps = [0.4, 0.2, 0.1, 0.05]
        slope, intercept, resid = fit_rate([(e, 3.0 * e) for e in eps])
        assert slope == pytest.approx(1.0, abs=1e-12)
        assert intercept == pytest.approx(np.log(3.0), abs=1e-12)
        assert resid < 1e-14

    def test_exact_quadratic_rate(self):
        eps = [0.4, 0.2, 0.1, 0.05]
        slope, _, _ = fit_rate([(e, 0.7 * e**2) for e in eps])
        assert slope == pytest.approx(2.0, abs=1e-12)

    def test_noisy_monte_carlo(self):
        # 5% multiplicative noise keeps the fitted slope within 1.0 +- 0.1
        rng = np.random.default_rng(11)
        eps = np.array([0.4, 0.2, 0.1, 0.05])
        slopes = []
        for _ in range(100):
            errs = 2.0 * eps * (1.0 + 0.05 * rng.uniform(-1, 1, size=4))
            slopes.append(fit_rate(list(zip(eps, errs)))[0])
        assert np.abs(np.asarray(slopes) - 1.0).max() < 0.1

    def test_nonpositive_excluded_with_warning(self):
        with pytest.warns(UserWarning):
            slope, _, _ = fit_rate([(0.4, 1.0), (0.2, 0.5), (0.1, 0.25),
                                    (0.05, -1.0)])
        assert slope == pytest.approx(1.0, abs=1e-12)

    def test_too_few_points(self):
        with pytest.raises(ValueError):
            fit_rate([(0.4, 1.0), (0.2, 0.5)])
