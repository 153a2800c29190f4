"""Energy monitoring for the forward-modulated perturbation.

The damping machinery controls high Sobolev norms of

    vring(x,t) = psi(x,t) - phi(x + gamma(x,t) + sigma(t)/N)

through the quadratic energy

    E(t) = ||vring_xx||^2 - (1/(2 beta)) <J M[phiring] vring_x, vring_x>,

with M[phi] = 2 [[-2 phi_r phi_i, phi_r^2 - phi_i^2],
                 [phi_r^2 - phi_i^2, 2 phi_r phi_i]].

Along a trajectory the module evaluates E, the norms entering the damping
inequality

    ||vring(t)||_{H^2}^2 <= C e^{-t} ||v0||_{H^2}^2 + C ||vring(t)||_{L^2}^2
        + C int_0^t e^{-(t-s)} (||vring||_{L^2}^2 + ||gamma_x||_{H^3}^2
                                + ||d_s gamma||_{H^2}^2 + |d_s sigma|^2) ds,

and fits the smallest feasible constants: these are certificates measured
from data, never assumed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .evolve import Trajectory
from .modulation import ModulationState, forward_modulated, modulated_wave
from .profile import WaveProfile
from .spectral import (
    Field2,
    ScalarField,
    derivative_values,
    l2_norm,
    quadrature_weight,
    refine_values,
    sobolev_norm,
)


class SmallnessViolatedError(RuntimeError):
    """The a priori smallness monitor exceeded its configured bound."""


@dataclass
class EnergyRecord:
    time: float
    E: float
    h2_vv: float        # ||vring_xx||^2
    l2_v: float         # ||vring||^2
    rhs_bound: float    # fitted-C right side of the damping inequality


@dataclass
class DampingReport:
    records: list
    K: float            # ||vring_xx||^2 <= 2E + K ||vring||^2
    C: float            # least feasible constant of the damping inequality
    R1: float
    smallness_max: float
    violations: int
    h2_sq: list = None  # ||vring||_{H^2}^2 per record (the inequality's left side)

    def to_json(self) -> str:
        return json.dumps(
            {
                "K": self.K,
                "C": self.C,
                "R1": self.R1,
                "smallness_max": self.smallness_max,
                "violations": self.violations,
                "n_records": len(self.records),
            },
            indent=1,
        )


def modulated_energy(v_ring: Field2, phi_ring: Field2, beta: float) -> float:
    """E = ||vring_xx||^2 - (1/(2 beta)) <J M[phiring] vring_x, vring_x>.

    The quadratic form is integrated on a 2x refined grid so the quartic
    integrand is quadrature-exact.
    """
    if beta == 0:
        raise ValueError("beta must be nonzero")
    L = v_ring.grid.period
    vxx = derivative_values(v_ring.values, L, 2)
    h2 = float(quadrature_weight(v_ring.grid) * np.sum(vxx**2))

    vx = derivative_values(v_ring.values, L, 1)
    vxr = refine_values(vx[:, 0], 2)
    vxi = refine_values(vx[:, 1], 2)
    pr = refine_values(phi_ring.values[:, 0], 2)
    pi = refine_values(phi_ring.values[:, 1], 2)
    m11 = 2.0 * (-2.0 * pr * pi)
    m12 = 2.0 * (pr**2 - pi**2)
    # (M u) then J: J(a, b) = (-b, a)
    mu_r = m11 * vxr + m12 * vxi
    mu_i = m12 * vxr - m11 * vxi
    integrand = -mu_i * vxr + mu_r * vxi
    w = quadrature_weight(v_ring.grid) / 2.0
    pairing = float(w * np.sum(integrand))
    return h2 - pairing / (2.0 * beta)


def exponential_memory_integral(times: np.ndarray, g: np.ndarray) -> np.ndarray:
    """I(t_i) = int_0^{t_i} e^{-(t_i - s)} g(s) ds by composite trapezoid."""
    S = len(times)
    out = np.zeros(S)
    dt = times[1] - times[0] if S > 1 else 0.0
    for i in range(1, S):
        w = np.full(i + 1, dt)
        w[0] *= 0.5
        w[-1] *= 0.5
        out[i] = float(np.sum(w * np.exp(-(times[i] - times[: i + 1])) * g[: i + 1]))
    return out


def exponential_memory_recursive(times: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Same integral via I(t+dt) = e^{-dt} I(t) + local trapezoid increment."""
    S = len(times)
    out = np.zeros(S)
    if S < 2:
        return out
    dt = times[1] - times[0]
    decay = np.exp(-dt)
    for i in range(1, S):
        out[i] = decay * out[i - 1] + 0.5 * dt * (decay * g[i - 1] + g[i])
    return out


def damping_report(traj: Trajectory, mod: ModulationState, wave: WaveProfile,
                   R1: float = 0.1, stride: int = 1) -> DampingReport:
    """Evaluate the damping inequality along a modulated trajectory.

    Computes vring and the energy per (strided) snapshot, monitors the
    smallness condition (raising SmallnessViolated past R1), and fits
      K: the least constant with ||vring_xx||^2 <= 2E + K ||vring||^2,
      C: the least constant >= 1 making the damping inequality hold at
         every snapshot.
    """
    N = mod.N
    grid = traj.grid
    beta = wave.params.beta
    idx = range(0, len(traj.times), stride)

    phi_tiled = np.tile(wave.field.values, (N, 1))
    v0 = Field2(grid, np.column_stack(
        [traj.states[0].real - phi_tiled[:, 0], traj.states[0].imag - phi_tiled[:, 1]]
    ))
    v0_h2_sq = sobolev_norm(v0, 2) ** 2

    times, E_arr, h2vv, l2sq, h2sq, gsum = [], [], [], [], [], []
    smallness = []
    for i in idx:
        gam = mod.gamma_field(i)
        psi_i = Field2.from_complex(grid, traj.states[i])
        vring = forward_modulated(psi_i, wave, gam, mod.sigma[i], N)
        phiring = modulated_wave(wave, gam, mod.sigma[i], N)
        E = modulated_energy(vring, phiring, beta)
        vxx = derivative_values(vring.values, grid.period, 2)
        times.append(traj.times[i])
        E_arr.append(E)
        h2vv.append(float(quadrature_weight(grid) * np.sum(vxx**2)))
        l2sq.append(l2_norm(vring) ** 2)
        h2sq.append(sobolev_norm(vring, 2) ** 2)
        gx_h3 = mod.gamma_sobolev(i, 3, x_derivatives=1)
        gt_h2 = mod.gamma_sobolev(i, 2, time_derivative=True)
        gsum.append(l2sq[-1] + gx_h3**2 + gt_h2**2 + mod.sigma_t[i] ** 2)
        smallness.append(np.sqrt(h2sq[-1]) + gx_h3 + gt_h2 + abs(mod.sigma_t[i]))

    times = np.array(times)
    run_small = np.maximum.accumulate(smallness)
    if np.any(run_small > R1):
        j = int(np.argmax(run_small > R1))
        raise SmallnessViolatedError(
            f"smallness monitor {run_small[j]:.3e} > R1={R1} at t={times[j]:.2f}"
        )

    mem = exponential_memory_integral(times, np.array(gsum))

    # K fit: max over snapshots of (||vring_xx||^2 - 2E) / ||vring||^2
    K = 0.0
    for h, E, l2 in zip(h2vv, E_arr, l2sq):
        if l2 > 1e-28:
            K = max(K, (h - 2.0 * E) / l2)
    K = max(K, 0.0)

    # C fit: least C >= 1 with H2^2 <= C (e^{-t} E0 + L2^2 + memory)
    C = 1.0
    for i, t in enumerate(times):
        denom = np.exp(-t) * v0_h2_sq + l2sq[i] + mem[i]
        if denom > 1e-28:
            C = max(C, h2sq[i] / denom)

    records = [
        EnergyRecord(
            time=float(times[i]), E=float(E_arr[i]), h2_vv=float(h2vv[i]),
            l2_v=float(l2sq[i]),
            rhs_bound=float(C * (np.exp(-times[i]) * v0_h2_sq + l2sq[i] + mem[i])),
        )
        for i in range(len(times))
    ]
    violations = sum(1 for i, r in enumerate(records) if h2sq[i] > r.rhs_bound * (1 + 1e-12))
    return DampingReport(records=records, K=float(K), C=float(C), R1=R1,
                         smallness_max=float(run_small[-1]), violations=violations,
                         h2_sq=[float(v) for v in h2sq])


@dataclass
class NormEquivalenceRecord:
    time: float
    ratio_inverse: float   # ||v||_{H^2} / (||vring||_{H^2} + ||gamma_x||_{H^1})
    ratio_forward: float   # ||vring||_{L^2} / (||v||_{L^2} + ||gamma_x||_{H^1})
    degenerate: bool


def norm_equivalence_report(psi: Field2, wave: WaveProfile, gamma: ScalarField,
                            sigma: float, N: int, time: float = 0.0) -> NormEquivalenceRecord:
    """Measured constants of the inverse/forward norm equivalence at one time."""
    from .modulation import GAMMA_SLOPE_BOUND, gamma_slope_sup, inverse_modulated

    if gamma_slope_sup(gamma) > GAMMA_SLOPE_BOUND:
        raise ValueError("||gamma_x||_inf exceeds 1/2")
    v = inverse_modulated(psi, wave, gamma, sigma, N)
    vring = forward_modulated(psi, wave, gamma, sigma, N)
    gx = derivative_values(gamma.values, gamma.grid.period, 1)
    gx_h1 = np.sqrt(
        quadrature_weight(gamma.grid) * np.sum(gx**2)
        + quadrature_weight(gamma.grid)
        * np.sum(derivative_values(gamma.values, gamma.grid.period, 2) ** 2)
    )
    v_h2 = sobolev_norm(v, 2)
    vr_h2 = sobolev_norm(vring, 2)
    v_l2 = l2_norm(v)
    vr_l2 = l2_norm(vring)
    scale = max(v_h2, vr_h2, gx_h1)
    if scale < 1e-12:
        return NormEquivalenceRecord(time, 1.0, 1.0, True)
    r1 = v_h2 / (vr_h2 + gx_h1) if (vr_h2 + gx_h1) > 0 else 1.0
    r2 = vr_l2 / (v_l2 + gx_h1) if (v_l2 + gx_h1) > 0 else 1.0
    return NormEquivalenceRecord(time, float(r1), float(r2), False)


def write_damping_csv(report: DampingReport, path) -> None:
    """CSV: t, E, ||vring_xx||^2, ||vring||^2, lhs, rhs, slack + JSON summary."""
    import csv as _csv

    with open(path, "w", newline="") as f:
        w = _csv.writer(f)
        w.writerow(["t", "E", "h2_vv", "l2_v", "lhs", "rhs", "slack"])
        for i, r in enumerate(report.records):
            lhs = report.h2_sq[i]
            w.writerow([repr(r.time), repr(r.E), repr(r.h2_vv), repr(r.l2_v),
                        repr(float(lhs)), repr(r.rhs_bound), repr(float(r.rhs_bound - lhs))])
    with open(str(path) + ".summary.json", "w") as f:
        f.write(report.to_json())
