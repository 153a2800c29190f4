"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Heavy artifacts (decay studies, crossover runs) are computed once per session
through the same drivers the command line exposes.
"""

import numpy as np
import pytest
import scipy.optimize

from conftest import random_smooth
from llestab.bloch import assemble_bloch, symmetric_modes
from llestab.damping import damping_report
from llestab.evolve import SimulationConfig, evolve_linearized, evolve_nonlinear
from llestab.experiments import (
    ExperimentConfig,
    PerturbationSpec,
    run_crossover,
    run_linear_decay,
    run_nonlinear_decay,
)
from llestab.modulation import duhamel_residual, solve_modulation
from llestab.profile import (
    LLEParams,
    LinearizedOperator,
    constant_state,
    constant_state_eigenvalues,
    constant_state_field,
    constant_state_intensities,
    linearized_operator,
)
from llestab.semigroup import build_kernel, riemann_envelope
from llestab.spectral import (
    Field2,
    PeriodicGrid,
    l2_norm,
    spectral_derivative,
    to_coeffs,
    to_field,
)


def record(number, name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"\nACCEPTANCE {number:2d} {name}: {status} {detail}")
    assert ok, f"criterion {number} ({name}): {detail}"


# ---------------------------------------------------------------------------
# shared heavy runs

@pytest.fixture(scope="module")
def linear_study(wave, curve, report, tmp_path_factory):
    cfg = ExperimentConfig(
        params=wave.params, N_list=(1, 2, 4, 8, 16, 32, 64),
        perturbation=PerturbationSpec(kind="random_smooth", amplitude=1.0, seed=0),
        t_end=120.0, n_samples=8,
        output_dir=str(tmp_path_factory.mktemp("linear")),
    )
    return run_linear_decay(cfg, wave, curve, report)


@pytest.fixture(scope="module")
def n8_run(wave, curve, kernels):
    """The small-amplitude N = 8 run behind criteria 9, 11 and 13."""
    N = 8
    ker = kernels(N)
    cfg = ExperimentConfig(
        params=ker.wave.params, N_list=(N,),
        perturbation=PerturbationSpec(kind="random_smooth", amplitude=1e-3, seed=0),
        dt=1e-3, t_end=20.0, snapshot_stride=5, output_dir="unused",
    )
    from llestab.experiments import make_perturbation

    v0 = make_perturbation(cfg.perturbation, ker.wave, N, norm="l1h2")
    psi0 = Field2(ker.grid, np.tile(ker.wave.field.values, (N, 1)) + v0.values)
    traj = evolve_nonlinear(psi0, ker.wave.params, cfg.sim_config(error_probe_stride=0), N=N)
    state = solve_modulation(traj, ker.wave, ker, tol=1e-9)
    return traj, state, ker


@pytest.fixture(scope="module")
def nonlinear_study(wave, curve, report, tmp_path_factory):
    cfg = ExperimentConfig(
        params=wave.params, N_list=(32,),
        perturbation=PerturbationSpec(kind="random_smooth", amplitude=1e-3, seed=0),
        dt=5e-3, t_end=118.0, snapshot_stride=10,
        output_dir=str(tmp_path_factory.mktemp("nonlinear")),
    )
    return run_nonlinear_decay(cfg, wave, curve, report, with_damping=False)


@pytest.fixture(scope="module")
def crossover_study(wave, curve, report, tmp_path_factory):
    out = {}
    for N, t_end in ((1, 35.0), (2, 35.0), (4, 70.0), (8, 280.0)):
        cfg = ExperimentConfig(
            params=wave.params, N_list=(N,),
            perturbation=PerturbationSpec(kind="random_smooth", amplitude=1e-3, seed=0),
            dt=1e-2, t_end=t_end, snapshot_stride=25,
            output_dir=str(tmp_path_factory.mktemp(f"crossover{N}")),
        )
        out.update(run_crossover(cfg, wave, curve, report)["by_N"])
    return out


# ---------------------------------------------------------------------------
# criteria

def test_criterion_01_kernel_identity(wave):
    op = linearized_operator(wave)
    pp = wave.derivative()
    ratio = l2_norm(op.apply(pp)) / l2_norm(pp)
    record(1, "kernel identity A[phi] phi' = 0", ratio <= 1e-8, f"ratio={ratio:.2e}")


def test_criterion_02_constant_state_oracle():
    params = LLEParams(alpha=1.0, beta=-1.0, forcing=0.8, period=2 * np.pi)
    worst = 0.0
    from llestab.profile import WaveProfile

    for rho in constant_state_intensities(params):
        c = constant_state(params, rho)
        wave_c = WaveProfile(params, constant_state_field(params, rho, 64))
        T = params.period
        for xi in np.linspace(-np.pi / T, np.pi / T, 65)[:-1]:
            B = assemble_bloch(wave_c, xi, 32)
            lam = np.linalg.eigvals(B.matrix)
            expected = np.concatenate([
                constant_state_eigenvalues(c, params, 2 * np.pi * k / T, xi)
                for k in symmetric_modes(32)
            ])
            cost = np.abs(lam[:, None] - expected[None, :])
            r, cc = scipy.optimize.linear_sum_assignment(cost)
            worst = max(worst, float(cost[r, cc].max()))
    record(2, "constant-state symbol oracle", worst < 1e-10, f"worst={worst:.2e}")


def test_criterion_03_spectral_decomposition(wave, curve):
    op = LinearizedOperator.for_wave(wave)
    worst = 0.0
    for N in (1, 2, 3, 4):
        kernel = build_kernel(wave, N, curve)
        ev_dense = np.linalg.eigvals(op.dense_grid_matrix(kernel.grid))
        ev_union = np.concatenate([blk.eigvals for blk in kernel.blocks])
        cost = np.abs(ev_dense[:, None] - ev_union[None, :])
        r, c = scipy.optimize.linear_sum_assignment(cost)
        worst = max(worst, float(cost[r, c].max()))
    record(3, "Bloch spectral decomposition", worst < 1e-8, f"hausdorff={worst:.2e}")


def test_criterion_04_semigroup_vs_ode(wave, kernels):
    ker = kernels(2)
    rng = np.random.default_rng(4)
    v0 = random_smooth(ker.grid, 2, rng)
    worst = 0.0
    for t in (0.5, 1.0, 5.0):
        cfg = SimulationConfig(dt=5e-4, t_end=t, snapshot_stride=int(round(t / 5e-4)),
                               error_probe_stride=0)
        traj = evolve_linearized(v0, wave, 2, cfg)
        got = Field2.from_complex(ker.grid, traj.states[-1])
        want = ker.apply_semigroup(t, v0)
        worst = max(worst, l2_norm(got - want) / l2_norm(want))
    record(4, "semigroup vs ODE oracle", worst <= 1e-6, f"rel={worst:.2e}")


def test_criterion_05_decomposition_resum(wave, kernels):
    ker = kernels(4)
    rng = np.random.default_rng(5)
    v = Field2(ker.grid, rng.standard_normal((ker.grid.n_points, 2)))
    pp = np.tile(wave.derivative().values, (4, 1))
    worst = 0.0
    for t in (0.0, 0.7, 3.0, 20.0):
        full = ker.apply_semigroup(t, v)
        resum = (float(ker.chi(t)) * ker.apply_zero_projection(v).values
                 + ker.apply_principal(t, v, tilde=True).values[:, None] * pp
                 + ker.apply_remainder(t, v).values)
        worst = max(worst, float(np.max(np.abs(resum - full.values))))
    record(5, "three-part resum identity", worst < 1e-10, f"max={worst:.2e}")


def test_criterion_06_linear_rates(linear_study):
    ent = linear_study["by_N"]["32"]
    e = ent["exponents"]
    targets = {"minus_P": -0.25, "phase": -0.25, "remainder": -0.75}
    devs = {k: abs(e[k] - targets[k]) for k in targets}
    ok_exp = all(d <= 0.15 for d in devs.values())
    s1 = linear_study["constants"]["slope_quarter_vs_logN"]
    s2 = linear_study["constants"]["slope_threequarter_vs_logN"]
    ok_slope = s1 <= 0.05 and s2 <= 0.05
    record(6, "uniform linear decay rates", ok_exp and ok_slope,
           f"exponents={ {k: round(v, 3) for k, v in e.items()} } "
           f"slopes=({s1:.3f},{s2:.3f})")


def test_criterion_07_riemann_envelope(curve):
    T = 2 * np.pi
    ts = np.concatenate([[0.0], np.geomspace(1e-2, 1e3, 50)])
    finite = True
    stable = True
    for n in (0, 1, 2):
        sups = []
        for N in (32, 64, 128):
            sups.append(max(riemann_envelope(n, curve.d, t, N, T) * (1 + t) ** (0.5 + n)
                            for t in ts))
        finite &= all(np.isfinite(sups))
        stable &= abs(sups[-1] - sups[-2]) <= 0.05 * sups[-2] + 1e-12
    record(7, "Riemann-sum envelope", finite and stable, "n in {0,1,2}, N to 128")


def test_criterion_08_integrator_order(wave):
    rng = np.random.default_rng(8)
    grid = wave.grid
    pert = random_smooth(grid, 1, rng)
    psi0 = Field2(grid, wave.field.values + 0.05 * pert.values)
    dts = [5e-3, 2.5e-3, 1.25e-3]
    ref = evolve_nonlinear(psi0, wave.params, SimulationConfig(
        dt=dts[-1] / 16, t_end=1.0, snapshot_stride=10**6, error_probe_stride=0))
    errs = []
    for dt in dts:
        tr = evolve_nonlinear(psi0, wave.params, SimulationConfig(
            dt=dt, t_end=1.0, snapshot_stride=int(round(1.0 / dt)), error_probe_stride=0))
        errs.append(l2_norm(Field2.from_complex(grid, tr.states[-1] - ref.states[-1])))
    slope = float(np.polyfit(np.log(dts), np.log(errs), 1)[0])
    record(8, "ETDRK4 self-convergence order", abs(slope - 4.0) <= 0.3,
           f"slope={slope:.3f}")


def test_criterion_09_modulation_fixed_point(n8_run):
    traj, state, ker = n8_run
    res = duhamel_residual(traj, ker.wave, ker, state)
    ok = state.contraction_history[-1] < 1e-9 and float(np.max(res)) < 1e-8
    record(9, "modulation fixed point + Duhamel residual", ok,
           f"sweeps={state.sweeps} last={state.contraction_history[-1]:.1e} "
           f"residual={np.max(res):.2e}")


def test_criterion_10_nonlinear_rates(nonlinear_study):
    ent = nonlinear_study["by_N"]["32"]
    e = ent["exponents"]
    targets = {
        "to_sigma_translate": -0.25,
        "gamma_nl_mean": -0.25,
        "to_modulated_wave": -0.75,
        "gamma_derivatives": -0.75,
    }
    devs = {k: abs(e[k] - targets[k]) for k in targets}
    ok = all(d <= 0.15 for d in devs.values()) and ent["sigma_diff_exponent"] <= -0.4
    record(10, "uniform nonlinear decay rates", ok,
           f"exponents={ {k: round(v, 3) for k, v in e.items()} } "
           f"sigma_diff={ent['sigma_diff_exponent']:.3f}")


def test_criterion_11_damping_certificate(wave, kernels, n8_run):
    traj, state, ker = n8_run
    rep = damping_report(traj, state, wave)
    ok_feasible = rep.violations == 0 and np.isfinite(rep.C)
    ok_pointwise = all(r.h2_vv <= 2 * r.E + rep.K * r.l2_v + 1e-12 for r in rep.records)
    # dt-halving stability on the same configuration
    from llestab.experiments import make_perturbation

    N = 8
    spec = PerturbationSpec(kind="random_smooth", amplitude=1e-3, seed=0)
    v0 = make_perturbation(spec, wave, N, norm="l1h2")
    psi0 = Field2(ker.grid, np.tile(wave.field.values, (N, 1)) + v0.values)
    cfg_half = SimulationConfig(dt=5e-4, t_end=20.0, snapshot_stride=10,
                                error_probe_stride=0)
    traj_half = evolve_nonlinear(psi0, wave.params, cfg_half, N=N)
    state_half = solve_modulation(traj_half, wave, ker, tol=1e-9)
    rep_half = damping_report(traj_half, state_half, wave)
    ok_stable = abs(rep.C - rep_half.C) <= 0.10 * rep_half.C
    record(11, "nonlinear damping certificate", ok_feasible and ok_pointwise and ok_stable,
           f"C={rep.C:.3f} (halved dt: {rep_half.C:.3f}) K={rep.K:.3f}")


def test_criterion_12_norm_equivalence(wave):
    from llestab.damping import norm_equivalence_report
    from llestab.spectral import ScalarField

    T = wave.params.period
    r1s, r2s = [], []
    Ns = (1, 2, 4, 8, 16)
    for N in Ns:
        rng = np.random.default_rng(20 + N)
        grid = PeriodicGrid(N * 64, N * T)
        pert = random_smooth(grid, N, rng)
        psi = Field2(grid, np.tile(wave.field.values, (N, 1)) + 1e-3 * pert.values)
        gam = ScalarField(grid, 2e-3 * np.sin(2 * np.pi * grid.nodes / T))
        rec = norm_equivalence_report(psi, wave, gam, 0.0, N)
        r1s.append(rec.ratio_inverse)
        r2s.append(rec.ratio_forward)
    s1 = float(np.polyfit(np.log(Ns), np.log(r1s), 1)[0])
    s2 = float(np.polyfit(np.log(Ns), np.log(r2s), 1)[0])
    record(12, "norm equivalence constants", s1 <= 0.05 and s2 <= 0.05,
           f"slopes=({s1:.3f},{s2:.3f})")


def test_criterion_13_crossover(crossover_study, n8_run, report):
    by_N = crossover_study
    # rates within 20% of delta_N
    ok_rate = all(abs(by_N[str(N)]["rate_over_delta"] - 1.0) <= 0.2
                  for N in (1, 2, 4, 8))
    # crossover times increase with N; where delta_N ties exactly (the gap is
    # set by the same co-periodic eigenvalue, e.g. N = 1 vs 2 here) the
    # crossover time ties as well, so allow measurement-level slack there
    tc = [by_N[str(N)]["t_cross"] for N in (1, 2, 4, 8)]
    deltas = [by_N[str(N)]["delta_N"] for N in (1, 2, 4, 8)]
    ok_mono = all(np.isfinite(tc))
    for (t0, t1), (d0, d1) in zip(zip(tc, tc[1:]), zip(deltas, deltas[1:])):
        if d1 < d0 * (1 - 1e-9):
            ok_mono &= t1 > t0
        else:
            ok_mono &= t1 >= t0 * 0.85
    # asymptotic translate equals sigma_nl / N from the modulation run
    traj, state, ker = n8_run
    sigma_nl, _ = state.sigma_nl()
    translate = by_N["8"]["translate"]
    ok_translate = abs(translate - sigma_nl / 8.0) < 1e-4
    record(13, "crossover to exponential decay", ok_rate and ok_mono and ok_translate,
           f"t_cross={ [round(t, 1) for t in tc] } "
           f"rate/delta={ [round(by_N[str(N)]['rate_over_delta'], 3) for N in (1, 2, 4, 8)] } "
           f"translate_err={abs(translate - sigma_nl / 8.0):.2e}")


def test_criterion_14_property_suites(wave, kernels):
    rng = np.random.default_rng(14)
    failures = []

    # Sobolev interpolation, 100 cases
    g = PeriodicGrid(64, 2 * np.pi)
    for i in range(100):
        m = np.fft.fftfreq(64, 1 / 64).astype(int)
        c = np.where(np.abs(m)[:, None] <= 12,
                     rng.standard_normal((64, 2)) + 1j * rng.standard_normal((64, 2)), 0)
        c[0] = c[0].real
        f = to_field(type(to_coeffs(Field2.zeros(g)))(g, c))
        lhs = l2_norm(spectral_derivative(f, 1)) ** 2
        rhs = l2_norm(spectral_derivative(f, 2)) * l2_norm(f)
        if lhs > rhs + 1e-10:
            failures.append(("sobolev", i))

    # Parseval, 100 cases
    for i in range(100):
        f = Field2(g, rng.standard_normal((64, 2)))
        via_coeffs = np.sqrt(g.period * np.sum(np.abs(to_coeffs(f).modes) ** 2))
        if abs(l2_norm(f) - via_coeffs) > 1e-12 * max(1.0, via_coeffs):
            failures.append(("parseval", i))

    # projection idempotence, 100 cases
    ker = kernels(2)
    for i in range(100):
        v = Field2(ker.grid, rng.standard_normal((ker.grid.n_points, 2)))
        P1 = ker.apply_zero_projection(v)
        P2 = ker.apply_zero_projection(P1)
        if np.max(np.abs(P2.values - P1.values)) > 1e-11 * max(1, np.max(np.abs(P1.values))):
            failures.append(("projection", i))

    # translation equivariance of the derivative, 100 cases
    from llestab.spectral import shifted_values

    for i in range(100):
        m = np.fft.fftfreq(64, 1 / 64).astype(int)
        c = np.where(np.abs(m)[:, None] <= 12,
                     rng.standard_normal((64, 2)) + 1j * rng.standard_normal((64, 2)), 0)
        c[0] = c[0].real
        f = to_field(type(to_coeffs(Field2.zeros(g)))(g, c))
        s = float(rng.uniform(0, g.period))
        a = shifted_values(spectral_derivative(f, 1).values[:, 0], g.period, s)
        b = derivative_after_shift = spectral_derivative(
            Field2(g, np.column_stack([
                shifted_values(f.values[:, 0], g.period, s),
                shifted_values(f.values[:, 1], g.period, s)])), 1).values[:, 0]
        if np.max(np.abs(a - b)) > 1e-10:
            failures.append(("translation", i))

    # reality round trips, 100 cases
    for i in range(100):
        f = Field2(g, rng.standard_normal((64, 2)))
        back = to_field(to_coeffs(f))
        if np.max(np.abs(back.values - f.values)) > 1e-12:
            failures.append(("reality", i))

    record(14, "randomized property suites", not failures,
           f"failures={failures[:5]}" if failures else "500 cases clean")
