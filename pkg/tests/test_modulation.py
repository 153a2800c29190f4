"""Phase extraction: modulated perturbations, nonlinearity, Picard solver."""

import numpy as np
import pytest

from conftest import random_smooth
from llestab.evolve import SimulationConfig, evolve_nonlinear
from llestab.modulation import (
    ConstraintViolatedError,
    assemble_nonlinearity,
    duhamel_residual,
    forward_modulated,
    inverse_modulated,
    save_modulation_csv,
    solve_modulation,
    unmodulated_nonlinearity,
)
from llestab.spectral import (
    Field2,
    PeriodicGrid,
    ScalarField,
    evaluate_trig,
    l2_norm,
)


def tiled(wave, N):
    return np.tile(wave.field.values, (N, 1))


def make_psi(wave, N, values):
    grid = PeriodicGrid(N * wave.grid.n_points, N * wave.params.period)
    return Field2(grid, values), grid


class TestModulatedPerturbations:
    def test_zero_modulation_is_plain_difference(self, wave):
        rng = np.random.default_rng(0)
        N = 2
        psi, grid = make_psi(wave, N, tiled(wave, N) + 1e-2 * rng.standard_normal((128, 2)))
        zero = ScalarField.zeros(grid)
        v = inverse_modulated(psi, wave, zero, 0.0, N)
        vr = forward_modulated(psi, wave, zero, 0.0, N)
        expected = psi.values - tiled(wave, N)
        assert np.max(np.abs(v.values - expected)) < 1e-12
        assert np.max(np.abs(vr.values - expected)) < 1e-12

    def test_translate_cancellation_through_sigma(self, wave):
        N = 2
        c = 0.37
        grid = PeriodicGrid(N * 64, N * wave.params.period)
        shifted = evaluate_trig(wave.field.as_complex(), wave.params.period,
                                grid.nodes + c)
        psi = Field2.from_complex(grid, shifted)
        v = inverse_modulated(psi, wave, ScalarField.zeros(grid), N * c, N)
        assert l2_norm(v) < 1e-10

    def test_translate_cancellation_through_gamma(self, wave):
        N = 2
        g = 0.23
        grid = PeriodicGrid(N * 64, N * wave.params.period)
        shifted = evaluate_trig(wave.field.as_complex(), wave.params.period,
                                grid.nodes + g)
        psi = Field2.from_complex(grid, shifted)
        gam = ScalarField(grid, np.full(grid.n_points, g))
        v = inverse_modulated(psi, wave, gam, 0.0, N)
        assert l2_norm(v) < 1e-10
        vr = forward_modulated(psi, wave, gam, 0.0, N)
        assert l2_norm(vr) < 1e-10

    def test_slope_constraint_enforced(self, wave):
        N = 2
        grid = PeriodicGrid(N * 64, N * wave.params.period)
        psi = Field2(grid, tiled(wave, N))
        steep = ScalarField(grid, 0.7 * np.sin(2 * np.pi * grid.nodes / grid.period)
                            * grid.period / (2 * np.pi))
        with pytest.raises(ConstraintViolatedError):
            inverse_modulated(psi, wave, steep, 0.0, N)

    def test_forward_norm_comparison_uniform_in_N(self, wave):
        # ||vring|| <= C (||v|| + ||gamma_x||_{H^1}) with C stable across N;
        # gamma is held T-periodic so every norm scales like sqrt(NT) and the
        # measured constant is N-comparable
        consts = []
        Ns = (1, 2, 4, 8)
        T = wave.params.period
        for N in Ns:
            rng = np.random.default_rng(10 + N)
            grid = PeriodicGrid(N * 64, N * wave.params.period)
            pert = random_smooth(grid, N, rng)
            psi = Field2(grid, tiled(wave, N) + 1e-3 * pert.values)
            gam_vals = 1e-3 * np.sin(2 * np.pi * grid.nodes / T)
            gam = ScalarField(grid, gam_vals)
            v = inverse_modulated(psi, wave, gam, 0.0, N)
            vr = forward_modulated(psi, wave, gam, 0.0, N)
            from llestab.spectral import derivative_values, quadrature_weight

            gx = derivative_values(gam_vals, grid.period, 1)
            gxx = derivative_values(gam_vals, grid.period, 2)
            w = quadrature_weight(grid)
            gx_h1 = np.sqrt(w * np.sum(gx**2) + w * np.sum(gxx**2))
            consts.append(l2_norm(vr) / (l2_norm(v) + gx_h1))
        slope = np.polyfit(np.log(Ns), np.log(consts), 1)[0]
        assert slope <= 0.05, consts


class TestNonlinearity:
    def test_vanishes_at_zero(self, wave):
        N = 2
        grid = PeriodicGrid(N * 64, N * wave.params.period)
        zero_f = Field2.zeros(grid)
        zero_s = ScalarField.zeros(grid)
        parts = assemble_nonlinearity(zero_f, zero_s, zero_s, 0.0, wave, N)
        for fld in (parts.Q, parts.R, parts.P, parts.combined):
            assert l2_norm(fld) == 0.0

    def test_reduces_to_unmodulated_form(self, wave):
        # gamma = 0, sigma_t = 0: combined equals the quadratic remainder of
        # the unmodulated perturbation equation
        rng = np.random.default_rng(1)
        N = 2
        grid = PeriodicGrid(N * 64, N * wave.params.period)
        v = random_smooth(grid, N, rng)
        zero_s = ScalarField.zeros(grid)
        parts = assemble_nonlinearity(v, zero_s, zero_s, 0.0, wave, N)
        ref = unmodulated_nonlinearity(v, wave, N)
        scale = max(1.0, np.max(np.abs(ref.values)))
        assert np.max(np.abs(parts.combined.values - ref.values)) < 1e-12 * scale
        assert l2_norm(parts.P) == 0.0

    def test_quadratic_leading_order(self, wave):
        # ||NL(eps v)|| ~ eps^2 for gamma = 0
        rng = np.random.default_rng(2)
        N = 2
        grid = PeriodicGrid(N * 64, N * wave.params.period)
        v = random_smooth(grid, N, rng)
        zero_s = ScalarField.zeros(grid)
        eps = np.array([1e-2, 1e-3, 1e-4])
        norms = []
        for e in eps:
            scaled = Field2(grid, e * v.values)
            parts = assemble_nonlinearity(scaled, zero_s, zero_s, 0.0, wave, N)
            from llestab.spectral import l1_norm

            norms.append(max(l1_norm(parts.combined), l2_norm(parts.combined)))
        slope = np.polyfit(np.log(eps), np.log(norms), 1)[0]
        assert abs(slope - 2.0) < 0.1, slope

    def test_slope_constraint_in_nonlinearity(self, wave):
        N = 2
        grid = PeriodicGrid(N * 64, N * wave.params.period)
        v = Field2.zeros(grid)
        steep = ScalarField(grid, 0.7 * grid.period / (2 * np.pi)
                            * np.sin(2 * np.pi * grid.nodes / grid.period))
        with pytest.raises(ConstraintViolatedError):
            assemble_nonlinearity(v, steep, ScalarField.zeros(grid), 0.0, wave, N)


@pytest.fixture(scope="module")
def small_run(wave, curve, kernels):
    """Shared small-amplitude N=8 trajectory with solved modulation."""
    N = 8
    ker = kernels(N)
    rng = np.random.default_rng(42)
    pert = random_smooth(ker.grid, N, rng, norm="l1h2")
    psi0 = Field2(ker.grid, np.tile(wave.field.values, (N, 1)) + 1e-3 * pert.values)
    cfg = SimulationConfig(dt=1e-3, t_end=12.0, snapshot_stride=5,
                           error_probe_stride=0)
    traj = evolve_nonlinear(psi0, wave.params, cfg, N=N)
    state = solve_modulation(traj, wave, ker, tol=1e-9)
    return traj, state, ker


class TestPicardSolver:
    def test_zero_perturbation_fixed_point(self, wave, kernels):
        N = 2
        ker = kernels(N)
        cfg = SimulationConfig(dt=5e-3, t_end=3.0, snapshot_stride=20,
                               error_probe_stride=0)
        psi0 = Field2(ker.grid, np.tile(wave.field.values, (N, 1)))
        traj = evolve_nonlinear(psi0, wave.params, cfg, N=N)
        state = solve_modulation(traj, wave, ker, tol=1e-10)
        assert np.max(np.abs(state.sigma)) < 1e-9
        if state.gamma_coeff.size:
            assert np.max(np.abs(state.gamma_coeff)) < 1e-9

    def test_short_horizon_modulations_vanish(self, wave, kernels):
        # chi and stilde_p vanish on [0,1]: any data gives zero modulation
        N = 8
        ker = kernels(N)
        rng = np.random.default_rng(5)
        pert = random_smooth(ker.grid, N, rng, norm="l1h2")
        psi0 = Field2(ker.grid, np.tile(wave.field.values, (N, 1)) + 5e-3 * pert.values)
        cfg = SimulationConfig(dt=5e-3, t_end=1.0, snapshot_stride=10,
                               error_probe_stride=0)
        traj = evolve_nonlinear(psi0, wave.params, cfg, N=N)
        state = solve_modulation(traj, wave, ker, tol=1e-10)
        assert np.max(np.abs(state.sigma)) == 0.0
        assert np.max(np.abs(state.gamma_coeff)) == 0.0

    def test_small_data_threshold_enforced(self, wave, kernels):
        N = 2
        ker = kernels(N)
        rng = np.random.default_rng(6)
        psi0 = Field2(ker.grid, np.tile(wave.field.values, (N, 1))
                      + 0.5 * rng.standard_normal((ker.grid.n_points, 2)))
        cfg = SimulationConfig(dt=5e-3, t_end=2.0, snapshot_stride=20,
                               error_probe_stride=0)
        traj = evolve_nonlinear(psi0, wave.params, cfg, N=N)
        with pytest.raises(ValueError):
            solve_modulation(traj, wave, ker)

    def test_converges_and_logs_contraction(self, small_run):
        traj, state, ker = small_run
        assert state.sweeps <= 10
        assert state.contraction_history[-1] < 1e-9
        # empirical contraction: each sweep shrinks the update
        hist = state.contraction_history
        for a, b in zip(hist, hist[1:]):
            assert b < a

    def test_initial_values_vanish(self, small_run):
        traj, state, ker = small_run
        assert state.sigma[0] == 0.0
        assert np.max(np.abs(state.gamma_coeff[0])) == 0.0

    def test_slope_bound_reported(self, small_run):
        traj, state, ker = small_run
        worst = max(state.gamma_slope_sup(i) for i in range(0, len(state.times), 50))
        assert worst <= 0.5

    def test_duhamel_residual_small(self, small_run):
        traj, state, ker = small_run
        res = duhamel_residual(traj, wave=ker.wave, kernel=ker, state=state)
        assert np.max(res) < 1e-8, np.max(res)

    def test_time_derivative_consistency(self, small_run):
        # centered differences of sigma match sigma_t to O(dt^2)
        traj, state, ker = small_run
        dt = state.times[1] - state.times[0]
        fd = (state.sigma[2:] - state.sigma[:-2]) / (2 * dt)
        err = np.max(np.abs(fd - state.sigma_t[1:-1]))
        assert err < 10 * dt**2 * max(1.0, np.max(np.abs(state.sigma_t)) / dt)
        # gamma_t as well, through the coefficients
        fdg = (state.gamma_coeff[2:] - state.gamma_coeff[:-2]) / (2 * dt)
        errg = np.max(np.abs(fdg - state.gamma_t_coeff[1:-1]))
        scale = max(np.max(np.abs(state.gamma_t_coeff)), 1e-12)
        assert errg < 1e-3 * scale + 10 * dt**2

    def test_sigma_converges_with_tail_bound(self, small_run):
        traj, state, ker = small_run
        value, tail = state.sigma_nl()
        assert np.isfinite(value)
        assert tail >= 0
        assert abs(state.sigma[-1] - value) <= 100 * tail + 1e-7

    def test_serialization(self, small_run, tmp_path):
        traj, state, ker = small_run
        save_modulation_csv(state, tmp_path / "mod")
        import json

        idx = json.loads((tmp_path / "mod_index.json").read_text())
        assert idx["n_snapshots"] == len(state.times)
        rows = (tmp_path / "mod_sigma.csv").read_text().splitlines()
        assert len(rows) == len(state.times) + 1
