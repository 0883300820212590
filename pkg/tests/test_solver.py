import math

import numpy as np
import pytest

from sandwiched_sde.model import (
    BoundFunctions,
    DriftSpec,
    SandwichConfig,
    cir_drift,
    constant_bound,
    power_sandwich_drift,
    sin_bound,
    tsb_drift,
)
from sandwiched_sde.noise import NoisePath, TimeGrid, brownian, fbm, generate_noise
from sandwiched_sde.solver import (
    ImplicitStepEquation,
    SimulatedPath,
    StepError,
    cardano_solve,
    check_sandwich,
    implicit_step_cir,
    implicit_step_generic,
    implicit_step_tsb,
    simulate,
    tsb_coefficients,
)


def bisection_oracle(drift, t_next, delta, rhs, lo, hi, tol=1e-13):
    """Independent root finder for y - b(t,y)*delta = rhs by pure bisection."""
    def g(y):
        return y - drift.b(t_next, y) * delta - rhs
    assert g(lo) < 0.0 < g(hi)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0.0:
            hi = mid
        else:
            lo = mid
        if hi - lo < tol * max(1.0, abs(mid)):
            break
    return 0.5 * (lo + hi)


def symmetric_tsb(kappa=1.0, kappa3=0.0, lam=0.7):
    bounds = BoundFunctions(constant_bound(-1.0), constant_bound(1.0),
                            lam, 0.0, 1.0)
    return tsb_drift(kappa / 2.0, kappa / 2.0, kappa3, bounds)


class TestImplicitStepCir:
    def test_equilibrium_is_fixed_point(self):
        # y = z + (1/y - y)*delta has the root y = 1 when z = 1.
        assert implicit_step_cir(1.0, 0.25, 0.0, 1.0, 1.0) == pytest.approx(
            1.0, abs=1e-15)

    def test_closed_form_value(self):
        got = implicit_step_cir(0.4, 0.1, 0.1, 1.0, 1.0)
        assert got == pytest.approx((0.5 + math.sqrt(0.69)) / 2.2, rel=1e-15)

    def test_positive_under_extreme_shock(self):
        y = implicit_step_cir(1.0, 0.1, -100.0, 1.0, 1.0)
        assert y > 0.0

    def test_agrees_with_bisection_oracle(self):
        rng = np.random.default_rng(2024)
        drift_cache = {}
        for _ in range(1000):
            kappa1 = rng.uniform(0.1, 3.0)
            kappa2 = rng.uniform(0.1, 3.0)
            delta = rng.uniform(0.001, 0.2)
            y_prev = rng.uniform(0.01, 5.0)
            dz = rng.normal()
            key = (kappa1, kappa2)
            if key not in drift_cache:
                drift_cache[key] = cir_drift(kappa1, kappa2, 1.0, 0.7, 1.0)
            drift = drift_cache[key]
            rhs = y_prev + dz
            closed = implicit_step_cir(y_prev, delta, dz, kappa1, kappa2)
            oracle = bisection_oracle(drift, 0.5, delta, rhs,
                                      lo=1e-14, hi=abs(rhs) + 10.0)
            assert closed == pytest.approx(oracle, abs=1e-10, rel=1e-10)


class TestTsbCoefficients:
    def test_symmetric_resting_state(self):
        b2, b1, b0 = tsb_coefficients(0.0, 0.0, 0.1, 0.5, 0.5, 0.0, -1.0, 1.0)
        assert (b2, b0) == (0.0, 0.0)
        assert b1 == pytest.approx(-1.1, rel=1e-15)

    def test_zero_mesh_factorizes(self):
        # At delta = 0 the cubic must be (y - phi)(y - psi)(y - z).
        rng = np.random.default_rng(7)
        for _ in range(50):
            phi = rng.uniform(-2.0, 0.0)
            psi = phi + rng.uniform(0.5, 2.0)
            z = rng.normal()
            b2, b1, b0 = tsb_coefficients(z, 0.0, 0.0, 1.0, 1.0, 0.3, phi, psi)
            assert b2 == pytest.approx(-(phi + psi + z), rel=1e-13, abs=1e-13)
            assert b1 == pytest.approx(phi * psi + (phi + psi) * z,
                                       rel=1e-13, abs=1e-13)
            assert b0 == pytest.approx(-phi * psi * z, rel=1e-13, abs=1e-13)

    def test_polynomial_identity(self):
        # Multiplying the implicit equation by (y-phi)(psi-y) must give
        # -(1 + delta*kappa3) times the monic cubic.
        rng = np.random.default_rng(11)
        for _ in range(200):
            phi = rng.uniform(-2.0, 0.0)
            psi = phi + rng.uniform(0.5, 2.0)
            z = rng.normal()
            delta = rng.uniform(0.0, 0.3)
            k1, k2 = rng.uniform(0.1, 2.0, 2)
            k3 = rng.uniform(-1.0, 1.0)
            b2, b1, b0 = tsb_coefficients(z, 0.0, delta, k1, k2, k3, phi, psi)
            for y in rng.uniform(phi - 1.0, psi + 1.0, 4):
                implicit = ((y - z) * (y - phi) * (psi - y)
                            - delta * k1 * (psi - y)
                            + delta * k2 * (y - phi)
                            + delta * k3 * y * (y - phi) * (psi - y))
                cubic = y ** 3 + b2 * y ** 2 + b1 * y + b0
                assert cubic == pytest.approx(
                    -implicit / (1.0 + delta * k3), rel=1e-10, abs=1e-10)

    def test_rejects_degenerate_scale(self):
        with pytest.raises(StepError):
            tsb_coefficients(0.0, 0.0, 1.0, 0.5, 0.5, -1.0, -1.0, 1.0)


class TestCardanoSolve:
    @staticmethod
    def assert_matches_companion(b2, b1, b0, rel=1e-8):
        ours = cardano_solve(b2, b1, b0)
        ref = np.roots([1.0, b2, b1, b0])
        scale = max(1.0, max(abs(r) for r in ref))
        for r in ref:
            assert min(abs(r - o) for o in ours) <= rel * scale

    def test_three_simple_roots(self):
        roots = sorted(r.real for r in cardano_solve(0.0, -1.0, 0.0))
        assert roots == pytest.approx([-1.0, 0.0, 1.0], abs=1e-14)
        assert all(abs(r.imag) < 1e-14 for r in cardano_solve(0.0, -1.0, 0.0))

    def test_triple_root(self):
        roots = cardano_solve(-3.0, 3.0, -1.0)
        for r in roots:
            assert r == pytest.approx(1.0, abs=1e-5)

    def test_single_real_root(self):
        # y^3 + y = 0 has roots 0, +-i.
        roots = cardano_solve(0.0, 1.0, 0.0)
        reals = sorted(roots, key=lambda r: abs(r.imag))
        assert reals[0] == pytest.approx(0.0, abs=1e-14)
        assert reals[1].imag == pytest.approx(1.0, abs=1e-14) or \
            reals[1].imag == pytest.approx(-1.0, abs=1e-14)

    def test_against_companion_matrix(self):
        rng = np.random.default_rng(99)
        for _ in range(300):
            b2, b1, b0 = rng.uniform(-5.0, 5.0, 3)
            self.assert_matches_companion(b2, b1, b0)

    def test_residual_small(self):
        rng = np.random.default_rng(5)
        for _ in range(100):
            b2, b1, b0 = rng.uniform(-3.0, 3.0, 3)
            for r in cardano_solve(b2, b1, b0):
                val = r ** 3 + b2 * r ** 2 + b1 * r + b0
                assert abs(val) < 1e-9 * max(1.0, abs(r)) ** 3


class TestImplicitStepTsb:
    def test_symmetric_zero(self):
        eq = ImplicitStepEquation(t_next=0.5, delta=0.1, rhs=0.0,
                                  drift=symmetric_tsb())
        assert implicit_step_tsb(eq) == pytest.approx(0.0, abs=1e-14)

    def test_stays_inside_for_extreme_shocks(self):
        drift = symmetric_tsb()
        for rhs in (-10.0, -1.0, 1.0, 10.0):
            eq = ImplicitStepEquation(t_next=0.5, delta=0.05, rhs=rhs,
                                      drift=drift)
            y = implicit_step_tsb(eq)
            assert -1.0 < y < 1.0

    def test_agrees_with_bisection_oracle(self):
        rng = np.random.default_rng(31)
        drift = symmetric_tsb(kappa=1.0, kappa3=0.25)
        for _ in range(1000):
            delta = rng.uniform(0.001, 0.2)
            rhs = rng.normal(scale=2.0)
            eq = ImplicitStepEquation(t_next=0.5, delta=delta, rhs=rhs,
                                      drift=drift)
            got = implicit_step_tsb(eq)
            oracle = bisection_oracle(drift, 0.5, delta, rhs,
                                      lo=-1.0 + 1e-14, hi=1.0 - 1e-14)
            assert got == pytest.approx(oracle, abs=1e-10, rel=1e-10)


class TestImplicitStepGeneric:
    def test_identity_when_drift_vanishes(self):
        bounds = BoundFunctions(constant_bound(-1e6), None, 0.5, 0.0, 1.0)
        drift = DriftSpec(b=lambda t, y: 0.0, db_dy=lambda t, y: 0.0,
                          c1=1.0, p=2.0, c2=1.0, gamma=1.0, y_star=1.0,
                          c3=1.0, kind="one-sided", bounds=bounds)
        for rhs in (-3.0, 0.0, 0.3, 12.5):
            eq = ImplicitStepEquation(t_next=0.5, delta=0.1, rhs=rhs,
                                      drift=drift)
            assert implicit_step_generic(eq) == pytest.approx(
                rhs, abs=1e-12 * max(1.0, abs(rhs)))

    def test_matches_cir_closed_form(self):
        drift = cir_drift(1.0, 1.0, 1.0, 0.7, 1.0)
        rng = np.random.default_rng(17)
        for _ in range(300):
            delta = rng.uniform(0.001, 0.2)
            y_prev = rng.uniform(0.05, 4.0)
            dz = rng.normal()
            eq = ImplicitStepEquation(t_next=0.5, delta=delta,
                                      rhs=y_prev + dz, drift=drift)
            generic = implicit_step_generic(eq)
            closed = implicit_step_cir(y_prev, delta, dz, 1.0, 1.0)
            assert generic == pytest.approx(closed, abs=1e-10, rel=1e-10)

    def test_matches_tsb_cardano(self):
        drift = symmetric_tsb()
        rng = np.random.default_rng(19)
        for _ in range(300):
            delta = rng.uniform(0.001, 0.2)
            rhs = rng.normal(scale=1.5)
            eq = ImplicitStepEquation(t_next=0.5, delta=delta, rhs=rhs,
                                      drift=drift)
            assert implicit_step_generic(eq) == pytest.approx(
                implicit_step_tsb(eq), abs=1e-10, rel=1e-10)

    def test_monotone_in_rhs(self):
        drift = cir_drift(2.0, 0.5, 2.0, 0.5, 1.0)
        ys = []
        for rhs in np.linspace(-3.0, 3.0, 13):
            eq = ImplicitStepEquation(t_next=0.3, delta=0.05, rhs=rhs,
                                      drift=drift)
            ys.append(implicit_step_generic(eq))
        assert all(a < b for a, b in zip(ys, ys[1:]))
        assert all(y > 0.0 for y in ys)

    def test_rejects_bad_tolerance(self):
        drift = cir_drift(1.0, 1.0, 1.0, 0.7, 1.0)
        eq = ImplicitStepEquation(t_next=0.5, delta=0.1, rhs=1.0, drift=drift)
        with pytest.raises(ValueError):
            implicit_step_generic(eq, tol=0.0)


def zero_noise(grid):
    return NoisePath(grid=grid, values=np.zeros(grid.n + 1), seed=0,
                     spec=brownian())


class TestSimulate:
    def test_equilibrium_stays_constant(self):
        cfg = SandwichConfig(1.0, cir_drift(1.0, 1.0, 1.0, 0.7, 1.0), 128)
        path = simulate(cfg, zero_noise(cfg.grid))
        assert np.allclose(path.values, 1.0, atol=1e-12)

    def test_refuses_overcoarse_mesh(self):
        cfg = SandwichConfig(1.0, cir_drift(1.0, 1.0, 1.0, 0.7, 1.0), 1)
        with pytest.raises(ValueError):
            simulate(cfg, zero_noise(cfg.grid))
        path = simulate(cfg, zero_noise(cfg.grid), unsafe_mesh=True)
        assert path.values[-1] > 0.0

    def test_rejects_mismatched_grid(self):
        cfg = SandwichConfig(1.0, cir_drift(1.0, 1.0, 1.0, 0.7, 1.0), 128)
        with pytest.raises(ValueError):
            simulate(cfg, zero_noise(TimeGrid(1.0, 64)))

    def test_deterministic(self):
        cfg = SandwichConfig(1.0, cir_drift(1.0, 1.0, 1.0, 0.7, 1.0), 256)
        noise = generate_noise(fbm(0.7), cfg.grid, 42)
        a = simulate(cfg, noise)
        b = simulate(cfg, noise)
        assert np.array_equal(a.values, b.values)

    def test_residual_contract(self):
        cfg = SandwichConfig(1.0, cir_drift(1.0, 1.0, 1.0, 0.7, 1.0), 512)
        noise = generate_noise(fbm(0.7), cfg.grid, 3)
        tol = 1e-12
        path = simulate(cfg, noise, tol=tol)
        drift = cfg.drift
        delta = cfg.mesh
        for k in range(cfg.grid_points):
            z = path.values[k] + noise.values[k + 1] - noise.values[k]
            y = path.values[k + 1]
            resid = abs(y - drift.b(path.grid.points[k + 1], y) * delta - z)
            assert resid <= tol * max(1.0, abs(z))

    def test_closed_and_generic_paths_agree(self):
        cfg = SandwichConfig(1.0, cir_drift(1.0, 1.0, 1.0, 0.7, 1.0), 256)
        noise = generate_noise(fbm(0.7), cfg.grid, 8)
        a = simulate(cfg, noise, stepper="closed")
        b = simulate(cfg, noise, stepper="generic")
        assert a.stepper == "closed_form_cir"
        assert b.stepper == "bracketed_generic"
        assert np.allclose(a.values, b.values, atol=1e-8)

    def test_tsb_sandwich_preserved(self):
        cfg = SandwichConfig(0.0, symmetric_tsb(), 256)
        for seed in range(20):
            noise = generate_noise(fbm(0.7), cfg.grid, seed)
            path = simulate(cfg, noise)
            assert path.stepper == "cardano_tsb"
            assert np.all(path.values > -1.0)
            assert np.all(path.values < 1.0)

    def test_power_sandwich_between_moving_barriers(self):
        bounds = BoundFunctions(sin_bound(0.0, 1.0, 10.0),
                                sin_bound(2.0, 1.0, 10.0), 0.3, 20.0, 1.0)
        drift = power_sandwich_drift(1.0, 1.0, 4.0, bounds)
        cfg = SandwichConfig(1.0, drift, 256)
        for seed in range(5):
            noise = generate_noise(fbm(0.35), cfg.grid, seed)
            path = simulate(cfg, noise)
            assert path.stepper == "bracketed_generic"
            tt = path.grid.points
            assert np.all(path.values > np.sin(10.0 * tt))
            assert np.all(path.values < np.sin(10.0 * tt) + 2.0)

    def test_closed_stepper_unavailable_for_power_gamma(self):
        bounds = BoundFunctions(constant_bound(-1.0), constant_bound(1.0),
                                0.4, 0.0, 1.0)
        drift = power_sandwich_drift(1.0, 1.0, 3.0, bounds)
        cfg = SandwichConfig(0.0, drift, 128)
        with pytest.raises(ValueError):
            simulate(cfg, zero_noise(cfg.grid), stepper="closed")


class TestCheckSandwich:
    def _cfg(self, n=8):
        return SandwichConfig(1.0, cir_drift(1.0, 1.0, 1.0, 0.7, 1.0), n)

    def test_reports_clean_path(self):
        cfg = self._cfg(128)
        path = simulate(cfg, generate_noise(fbm(0.7), cfg.grid, 1))
        report = check_sandwich(path, cfg)
        assert report.strict_ok
        assert report.violations == ()
        assert report.envelope_ok is None

    def test_detects_injected_violation(self):
        cfg = self._cfg(4)
        values = np.array([1.0, 0.9, -0.1, 0.8, 1.1])
        path = SimulatedPath(grid=cfg.grid, values=values, noise_seed=0,
                             stepper="closed_form_cir", residuals=np.zeros(5))
        report = check_sandwich(path, cfg)
        assert not report.strict_ok
        assert report.violations == (2,)

    def test_envelope_flags_grazing_path(self):
        cfg = self._cfg(4)
        values = np.array([1.0, 1.0, 1e-15, 1.0, 1.0])
        path = SimulatedPath(grid=cfg.grid, values=values, noise_seed=0,
                             stepper="closed_form_cir", residuals=np.zeros(5))
        report = check_sandwich(path, cfg, lam_hat=1.0)
        assert report.strict_ok
        assert report.envelope_ok is False
        assert 2 in report.envelope_violations
