"""Stiff time integration of the cavity equation and its linearization.

Fourth-order exponential time differencing (the Cox-Matthews ETDRK4 scheme,
coefficients as in Kassam-Trefethen) with the full constant-coefficient part

    L(k) = i beta k^2 - (1 + i alpha)

treated exactly in Fourier space, so the explicit remainder is the pure cubic
plus pump. phi-functions are evaluated by a small-argument Taylor series
switched at |z| < 0.1 (no contour quadrature needed; the damping keeps L away
from 0).

The linearized flow about a stationary wave uses the same stepper with the
frozen-coefficient remainder i (2|phi|^2 w + phi^2 conj(w)); it serves as the
independent time-integration oracle for the Bloch-based solution operator.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .profile import LLEParams, WaveProfile
from .spectral import Field2, PeriodicGrid, refine_values, truncate_values


class BlowUpError(RuntimeError):
    """Solution norm exceeded the blow-up threshold."""

    def __init__(self, message: str, last_time: float):
        super().__init__(message)
        self.last_time = last_time


class StepTooLargeError(RuntimeError):
    """Step-doubling error probe exceeded its tolerance."""


BLOWUP_NORM = 1e6


@dataclass
class SimulationConfig:
    """Time-stepping parameters; dt is capped so the cavity scale is resolved."""

    dt: float = 5e-3
    t_end: float = 10.0
    snapshot_stride: int = 10
    dealias: bool = True
    error_probe_stride: int = 200  # step-doubling check cadence (0 disables)
    error_probe_tol: float = 1e-5

    def __post_init__(self):
        if not 0 < self.dt <= 0.1:
            raise ValueError("dt must be in (0, 0.1]")
        if self.t_end < self.dt:
            raise ValueError("t_end must be at least dt")
        if self.snapshot_stride < 1:
            raise ValueError("snapshot_stride must be >= 1")


@dataclass
class Trajectory:
    """Uniformly sampled snapshots of a complex field on [0, NT]."""

    times: np.ndarray
    states: np.ndarray  # complex, shape (n_snapshots, n_points)
    params: LLEParams
    N: int
    grid: PeriodicGrid

    def __post_init__(self):
        if not np.all(np.isfinite(self.states.real)) or not np.all(np.isfinite(self.states.imag)):
            raise ValueError("trajectory contains non-finite states")
        dts = np.diff(self.times)
        if dts.size and (np.any(dts <= 0) or np.max(np.abs(dts - dts[0])) > 1e-9 * dts[0]):
            raise ValueError("snapshot times must be uniformly increasing")

    def field(self, i: int) -> Field2:
        return Field2.from_complex(self.grid, self.states[i])

    def __len__(self) -> int:
        return len(self.times)


# ---------------------------------------------------------------------------
# phi functions

def _phi_series(z: np.ndarray, order: int, terms: int = 14) -> np.ndarray:
    """phi_order(z) = sum_{j>=0} z^j / (j + order)! via Taylor."""
    import math

    acc = np.ones_like(z) / math.factorial(order)
    out = acc.copy()
    for j in range(1, terms):
        acc = acc * z / (j + order)
        out += acc
    return out


def phi1(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 0.1
    out = np.empty_like(z)
    zs = np.where(small, 1.0, z)
    out[~small] = ((np.exp(zs) - 1.0) / zs)[~small]
    out[small] = _phi_series(z, 1)[small]
    return out


def phi2(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 0.1
    out = np.empty_like(z)
    zs = np.where(small, 1.0, z)
    out[~small] = ((np.exp(zs) - 1.0 - zs) / zs**2)[~small]
    out[small] = _phi_series(z, 2)[small]
    return out


def phi3(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    small = np.abs(z) < 0.1
    out = np.empty_like(z)
    zs = np.where(small, 1.0, z)
    out[~small] = ((np.exp(zs) - 1.0 - zs - zs**2 / 2.0) / zs**3)[~small]
    out[small] = _phi_series(z, 3)[small]
    return out


# ---------------------------------------------------------------------------
# right-hand sides

def lle_rhs(psi: Field2, params: LLEParams, dealias: bool = True) -> Field2:
    """psi_t = -i beta psi_xx - (1 + i alpha) psi + i |psi|^2 psi + F."""
    z = psi.as_complex()
    L = psi.grid.period
    n = psi.grid.n_points
    kap = psi.grid.wavenumbers
    zh = np.fft.fft(z)
    lin = np.fft.ifft((1j * params.beta * kap**2 - (1.0 + 1j * params.alpha)) * zh)
    if dealias:
        zf = refine_values(z, 2)
        cubic = truncate_values(1j * np.abs(zf) ** 2 * zf, 2)
    else:
        cubic = 1j * np.abs(z) ** 2 * z
    return Field2.from_complex(psi.grid, lin + cubic + params.forcing)


class _ETDRK4:
    """Diagonal-stiff ETDRK4 stepper for a complex field on a periodic grid."""

    def __init__(self, grid: PeriodicGrid, params: LLEParams, dt: float, nonlinear):
        self.grid = grid
        self.dt = dt
        self.nonlinear = nonlinear
        kap = grid.wavenumbers
        Lsym = 1j * params.beta * kap**2 - (1.0 + 1j * params.alpha)
        z = dt * Lsym
        self.E = np.exp(z)
        self.E2 = np.exp(z / 2.0)
        self.Q = dt * 0.5 * phi1(z / 2.0)
        self.f1 = dt * (phi1(z) - 3.0 * phi2(z) + 4.0 * phi3(z))
        self.f2 = dt * (phi2(z) - 2.0 * phi3(z))
        self.f3 = dt * (4.0 * phi3(z) - phi2(z))

    def step(self, vh: np.ndarray) -> np.ndarray:
        """One step in Fourier space; vh are FFT coefficients of the field."""
        Nv = self.nonlinear(vh)
        a = self.E2 * vh + self.Q * Nv
        Na = self.nonlinear(a)
        b = self.E2 * vh + self.Q * Na
        Nb = self.nonlinear(b)
        c = self.E2 * a + self.Q * (2.0 * Nb - Nv)
        Nc = self.nonlinear(c)
        return self.E * vh + self.f1 * Nv + 2.0 * self.f2 * (Na + Nb) + self.f3 * Nc


def _make_cubic_nonlinearity(grid: PeriodicGrid, params: LLEParams, dealias: bool):
    n = grid.n_points
    F = params.forcing

    def nonlinear(vh: np.ndarray) -> np.ndarray:
        z = np.fft.ifft(vh)
        if dealias:
            zf = refine_values(z, 2)
            cubic = truncate_values(1j * np.abs(zf) ** 2 * zf, 2)
        else:
            cubic = 1j * np.abs(z) ** 2 * z
        out = np.fft.fft(cubic)
        out[0] += F * n
        return out

    return nonlinear


def _make_frozen_nonlinearity(grid: PeriodicGrid, wave: WaveProfile, n_periods: int):
    """The linear remainder i (2|phi|^2 w + phi^2 conj w), alias-free."""
    phi = np.tile(wave.field.values, (n_periods, 1))
    phic = phi[:, 0] + 1j * phi[:, 1]
    two_mod2_f = refine_values(2.0 * np.abs(phic) ** 2, 2)
    phi2_f = refine_values(phic * phic, 2)

    def nonlinear(vh: np.ndarray) -> np.ndarray:
        w = np.fft.ifft(vh)
        wf = refine_values(w, 2)
        term = truncate_values(1j * (two_mod2_f * wf + phi2_f * np.conj(wf)), 2)
        return np.fft.fft(term)

    return nonlinear


def _integrate(z0: np.ndarray, grid: PeriodicGrid, params: LLEParams, N: int,
               config: SimulationConfig, nonlinear) -> Trajectory:
    n_steps = int(round(config.t_end / config.dt))
    stepper = _ETDRK4(grid, params, config.dt, nonlinear)
    half = _ETDRK4(grid, params, config.dt / 2.0, nonlinear) if config.error_probe_stride else None

    vh = np.fft.fft(np.asarray(z0, dtype=complex))
    times = [0.0]
    states = [z0.copy()]
    weight = np.sqrt(grid.period / grid.n_points)
    for step in range(1, n_steps + 1):
        if config.error_probe_stride and step % config.error_probe_stride == 0:
            fine = half.step(half.step(vh.copy()))
            coarse = stepper.step(vh.copy())
            err = weight * np.linalg.norm(np.fft.ifft(fine - coarse))
            if err > config.error_probe_tol:
                raise StepTooLargeError(
                    f"step-doubling error {err:.2e} > {config.error_probe_tol:.1e} at t={step * config.dt:.3f}"
                )
            vh = fine
        else:
            vh = stepper.step(vh)
        if step % config.snapshot_stride == 0 or step == n_steps:
            z = np.fft.ifft(vh)
            nrm = weight * np.linalg.norm(z)
            if not np.isfinite(nrm) or nrm > BLOWUP_NORM:
                raise BlowUpError(
                    f"norm {nrm:.3e} exceeded {BLOWUP_NORM:.0e}", last_time=times[-1]
                )
            times.append(step * config.dt)
            states.append(z)
    # drop a duplicated final snapshot if t_end is not a stride multiple
    times_arr = np.array(times)
    keep = np.concatenate([[True], np.diff(times_arr) > 1e-12])
    uniform = np.nonzero(keep)[0]
    times_arr = times_arr[uniform]
    states_arr = np.array([states[i] for i in uniform])
    if len(times_arr) > 2:
        dts = np.diff(times_arr)
        if np.max(np.abs(dts - dts[0])) > 1e-9 * dts[0]:
            times_arr = times_arr[:-1]
            states_arr = states_arr[:-1]
    return Trajectory(times_arr, states_arr, params, N, grid)


def evolve_nonlinear(psi0: Field2, params: LLEParams, config: SimulationConfig,
                     N: int | None = None) -> Trajectory:
    """Integrate the full cavity equation from psi0 on its grid."""
    grid = psi0.grid
    if N is None:
        N = int(round(grid.period / params.period))
    nonlinear = _make_cubic_nonlinearity(grid, params, config.dealias)
    return _integrate(psi0.as_complex(), grid, params, N, config, nonlinear)


def evolve_linearized(v0: Field2, wave: WaveProfile, N: int,
                      config: SimulationConfig) -> Trajectory:
    """Integrate w_t = A[phi] w with frozen coefficients on [0, NT]."""
    grid = PeriodicGrid(N * wave.grid.n_points, N * wave.params.period)
    if v0.grid != grid:
        raise ValueError("v0 grid does not match [0, NT] at the wave resolution")
    nonlinear = _make_frozen_nonlinearity(grid, wave, N)
    params = wave.params
    return _integrate(v0.as_complex(), grid, params, N, config, nonlinear)


# ---------------------------------------------------------------------------
# trajectory persistence: metadata JSON + binary columnar payload

_MAGIC = b"LLETRAJ1"


def save_trajectory(traj: Trajectory, directory) -> None:
    """Directory layout: metadata.json + states.bin.

    states.bin: magic "LLETRAJ1", u32 n_points, u32 n_snapshots, then
    little-endian f64 payload: the times array (n_snapshots values) followed
    by snapshots in time order, each n_points pairs (real, imag).
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "params": {
            "alpha": traj.params.alpha,
            "beta": traj.params.beta,
            "forcing": traj.params.forcing,
            "period": traj.params.period,
        },
        "N": traj.N,
        "n_points": traj.grid.n_points,
        "grid_period": traj.grid.period,
        "n_snapshots": len(traj.times),
    }
    (directory / "metadata.json").write_text(json.dumps(meta, indent=1))
    with open(directory / "states.bin", "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<II", traj.grid.n_points, len(traj.times)))
        f.write(np.asarray(traj.times, dtype="<f8").tobytes())
        inter = np.empty((len(traj.times), traj.grid.n_points, 2), dtype="<f8")
        inter[:, :, 0] = traj.states.real
        inter[:, :, 1] = traj.states.imag
        f.write(inter.tobytes())


def load_trajectory(directory) -> Trajectory:
    directory = Path(directory)
    meta = json.loads((directory / "metadata.json").read_text())
    with open(directory / "states.bin", "rb") as f:
        magic = f.read(8)
        if magic != _MAGIC:
            raise ValueError(f"bad magic {magic!r}")
        n_points, n_snapshots = struct.unpack("<II", f.read(8))
        times = np.frombuffer(f.read(8 * n_snapshots), dtype="<f8").copy()
        payload = np.frombuffer(f.read(16 * n_snapshots * n_points), dtype="<f8")
    inter = payload.reshape(n_snapshots, n_points, 2)
    params = LLEParams(**meta["params"])
    grid = PeriodicGrid(n_points, meta["grid_period"])
    states = inter[:, :, 0] + 1j * inter[:, :, 1]
    return Trajectory(times, states, params, meta["N"], grid)
