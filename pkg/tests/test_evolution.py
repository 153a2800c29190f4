"""Time integration: stationarity, order, linearized consistency, persistence."""

import numpy as np
import pytest

from conftest import random_smooth
from llestab import evolve as evolve_mod
from llestab.evolve import (
    BlowUpError,
    SimulationConfig,
    StepTooLargeError,
    evolve_linearized,
    evolve_nonlinear,
    lle_rhs,
    load_trajectory,
    phi1,
    phi2,
    phi3,
    save_trajectory,
)
from llestab.profile import LLEParams, constant_state_field, constant_state_intensities
from llestab.spectral import Field2, PeriodicGrid, l2_norm


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            SimulationConfig(dt=0.5)
        with pytest.raises(ValueError):
            SimulationConfig(dt=1e-2, t_end=1e-3)
        with pytest.raises(ValueError):
            SimulationConfig(snapshot_stride=0)


class TestPhiFunctions:
    def test_series_matches_closed_form_at_boundary(self):
        # continuity across the small-|z| switch
        for fn, order in ((phi1, 1), (phi2, 2), (phi3, 3)):
            for z in (0.0999, 0.1001, 0.0999j, 0.1001j, -0.07 + 0.07j):
                z = np.array([z])
                import math

                exact = sum(z[0] ** j / math.factorial(j + order) for j in range(25))
                assert abs(fn(z)[0] - exact) < 1e-13 * max(1, abs(exact))


class TestRightHandSide:
    def test_stationary_wave_is_critical_point(self, wave):
        r = lle_rhs(wave.field, wave.params)
        assert l2_norm(r) <= 10 * max(wave.residual_norm, 1e-13)

    def test_zero_field_gives_pure_forcing(self):
        params = LLEParams(alpha=1.0, beta=-1.0, forcing=1.3, period=2 * np.pi)
        grid = PeriodicGrid(64, 2 * np.pi)
        r = lle_rhs(Field2.zeros(grid), params)
        assert np.max(np.abs(r.values[:, 0] - params.forcing)) < 1e-14
        assert np.max(np.abs(r.values[:, 1])) < 1e-14

    def test_linearization_consistency(self, wave):
        # rhs(phi + h v) - rhs(phi) - h A v = O(h^2), any v
        from llestab.profile import linearized_operator

        rng = np.random.default_rng(0)
        op = linearized_operator(wave)
        grid = wave.grid
        v = rng.standard_normal((grid.n_points, 2))
        v /= np.max(np.abs(v))
        Av = op.apply(Field2(grid, v)).values
        base = lle_rhs(wave.field, wave.params).values
        errs = []
        for h in (1e-3, 1e-4):
            plus = lle_rhs(Field2(grid, wave.field.values + h * v), wave.params).values
            errs.append(np.max(np.abs((plus - base) / h - Av)))
        assert errs[1] < errs[0] / 5  # first-order difference: O(h)
        assert errs[1] < 1e-3


class TestNonlinearEvolution:
    def test_stationary_wave_persists(self, wave):
        cfg = SimulationConfig(dt=5e-3, t_end=50.0, snapshot_stride=2000,
                               error_probe_stride=0)
        traj = evolve_nonlinear(wave.field, wave.params, cfg)
        for i in range(len(traj)):
            drift = l2_norm(Field2.from_complex(traj.grid, traj.states[i]) - wave.field)
            assert drift < 1e-8

    def test_stable_constant_state_persists(self):
        params = LLEParams(alpha=1.0, beta=-1.0, forcing=0.8, period=2 * np.pi)
        rho = constant_state_intensities(params)[-1]
        f = constant_state_field(params, rho, 64)
        cfg = SimulationConfig(dt=5e-3, t_end=10.0, snapshot_stride=500,
                               error_probe_stride=0)
        traj = evolve_nonlinear(f, params, cfg)
        assert l2_norm(Field2.from_complex(traj.grid, traj.states[-1]) - f) < 1e-10

    def test_fourth_order_self_convergence(self, wave):
        rng = np.random.default_rng(1)
        grid = wave.grid
        pert = random_smooth(grid, 1, rng)
        psi0 = Field2(grid, wave.field.values + 0.05 * pert.values)
        dts = [1e-2, 5e-3, 2.5e-3]
        ref = evolve_nonlinear(psi0, wave.params, SimulationConfig(
            dt=dts[-1] / 16, t_end=1.0, snapshot_stride=10**6, error_probe_stride=0))
        errs = []
        for dt in dts:
            tr = evolve_nonlinear(psi0, wave.params, SimulationConfig(
                dt=dt, t_end=1.0, snapshot_stride=int(round(1.0 / dt)),
                error_probe_stride=0))
            errs.append(l2_norm(Field2.from_complex(grid, tr.states[-1] - ref.states[-1])))
        # error scales as dt^4 within a factor 2 per halving
        for a, b in zip(errs, errs[1:]):
            assert 8.0 <= a / b <= 32.0, errs

    def test_blowup_guard(self, wave, monkeypatch):
        monkeypatch.setattr(evolve_mod, "BLOWUP_NORM", 1e-6)
        cfg = SimulationConfig(dt=5e-3, t_end=1.0, snapshot_stride=10,
                               error_probe_stride=0)
        with pytest.raises(BlowUpError) as err:
            evolve_nonlinear(wave.field, wave.params, cfg)
        assert err.value.last_time >= 0.0

    def test_step_probe_guard(self, wave):
        rng = np.random.default_rng(2)
        grid = wave.grid
        pert = random_smooth(grid, 1, rng)
        psi0 = Field2(grid, wave.field.values + 0.05 * pert.values)
        cfg = SimulationConfig(dt=5e-2, t_end=1.0, snapshot_stride=2,
                               error_probe_stride=1, error_probe_tol=1e-14)
        with pytest.raises(StepTooLargeError):
            evolve_nonlinear(psi0, wave.params, cfg)

    def test_determinism(self, wave):
        rng = np.random.default_rng(3)
        grid = wave.grid
        psi0 = Field2(grid, wave.field.values + 1e-3 * rng.standard_normal((64, 2)))
        cfg = SimulationConfig(dt=5e-3, t_end=0.5, snapshot_stride=10,
                               error_probe_stride=0)
        t1 = evolve_nonlinear(psi0, wave.params, cfg)
        t2 = evolve_nonlinear(psi0, wave.params, cfg)
        assert np.array_equal(t1.states, t2.states)

    def test_periodicity_preserved(self, wave):
        # spectral representation: NT-periodicity is exact; snapshots stay
        # finite and on the same grid
        rng = np.random.default_rng(4)
        grid = PeriodicGrid(2 * 64, 2 * wave.params.period)
        pert = random_smooth(grid, 2, rng)
        psi0 = Field2(grid, np.tile(wave.field.values, (2, 1)) + 1e-2 * pert.values)
        cfg = SimulationConfig(dt=5e-3, t_end=0.2, snapshot_stride=10,
                               error_probe_stride=0)
        traj = evolve_nonlinear(psi0, wave.params, cfg, N=2)
        assert traj.grid == grid
        assert np.all(np.isfinite(traj.states.real))


class TestLinearizedEvolution:
    def test_translation_mode_constant(self, wave):
        grid = PeriodicGrid(64, wave.params.period)
        pp = wave.derivative()
        cfg = SimulationConfig(dt=2e-3, t_end=2.0, snapshot_stride=100,
                               error_probe_stride=0)
        traj = evolve_linearized(pp, wave, 1, cfg)
        for i in range(len(traj)):
            assert l2_norm(Field2.from_complex(grid, traj.states[i]) - pp) < 1e-7

    def test_matches_semigroup(self, wave, kernels):
        ker = kernels(2)
        rng = np.random.default_rng(5)
        v0 = random_smooth(ker.grid, 2, rng)
        cfg = SimulationConfig(dt=5e-4, t_end=1.0, snapshot_stride=2000,
                               error_probe_stride=0)
        traj = evolve_linearized(v0, wave, 2, cfg)
        got = Field2.from_complex(ker.grid, traj.states[-1])
        want = ker.apply_semigroup(1.0, v0)
        assert l2_norm(got - want) <= 1e-6 * l2_norm(want)

    def test_no_exponential_growth(self, wave):
        # the certified spectrum has Re <= 0: generic data shows no growth
        # beyond roundoff-level epsilon rates
        rng = np.random.default_rng(6)
        grid = PeriodicGrid(64, wave.params.period)
        v0 = random_smooth(grid, 1, rng)
        cfg = SimulationConfig(dt=5e-3, t_end=30.0, snapshot_stride=200,
                               error_probe_stride=0)
        traj = evolve_linearized(v0, wave, 1, cfg)
        norms = [l2_norm(Field2.from_complex(grid, traj.states[i]))
                 for i in range(len(traj))]
        bound = norms[0] * np.exp(1e-6 * traj.times) * (1 + 1e-9)
        assert np.all(norms <= bound), max(norms / bound)

    def test_nonlinear_linear_consistency(self, wave):
        # ||(psi_eps(t) - phi)/eps - u_lin(t)|| = O(eps)
        rng = np.random.default_rng(7)
        grid = wave.grid
        v = random_smooth(grid, 1, rng)
        cfg = SimulationConfig(dt=1e-3, t_end=1.0, snapshot_stride=1000,
                               error_probe_stride=0)
        lin = evolve_linearized(v, wave, 1, cfg)
        u_lin = lin.states[-1]
        errs = []
        for eps in (1e-3, 1e-4):
            psi0 = Field2(grid, wave.field.values + eps * v.values)
            tr = evolve_nonlinear(psi0, wave.params, cfg)
            diff = (tr.states[-1] - wave.field.as_complex()) / eps - u_lin
            errs.append(l2_norm(Field2.from_complex(grid, diff)))
        assert errs[0] < 1e-2
        assert errs[1] < errs[0] / 5


class TestPersistence:
    def test_binary_round_trip(self, wave, tmp_path):
        cfg = SimulationConfig(dt=5e-3, t_end=0.1, snapshot_stride=5,
                               error_probe_stride=0)
        traj = evolve_nonlinear(wave.field, wave.params, cfg)
        save_trajectory(traj, tmp_path / "run")
        back = load_trajectory(tmp_path / "run")
        assert np.array_equal(back.times, traj.times)
        assert np.array_equal(back.states, traj.states)
        assert back.params == traj.params
        assert back.N == traj.N

    def test_magic_validated(self, wave, tmp_path):
        cfg = SimulationConfig(dt=5e-3, t_end=0.05, snapshot_stride=5,
                               error_probe_stride=0)
        traj = evolve_nonlinear(wave.field, wave.params, cfg)
        save_trajectory(traj, tmp_path / "run")
        bad = (tmp_path / "run" / "states.bin").read_bytes()
        (tmp_path / "run" / "states.bin").write_bytes(b"NOTMAGIC" + bad[8:])
        with pytest.raises(ValueError):
            load_trajectory(tmp_path / "run")
