"""The linearized solution operator and its slow/fast decomposition.

On [0, NT] the semigroup generated by A[phi] acts blockwise over the Bloch
frequencies Omega_N:

    e^{A t} v(x) = (1/NT) sum_{xi in Omega_N} e^{i xi x} e^{A_xi t} B_T(v)(xi, x),

where B_T regroups the NT-periodic Fourier modes by residue class mod 2pi/T.
The slow dynamics are split off as

    e^{A t} v = chi(t) P0 v + phi' stilde_p(t) v + Stilde(t) v,

with P0 the rank-one projection onto span{phi'}, s_p the scalar phase
propagator built from the critical curve lambda_c(xi), chi a smooth switch
that vanishes on [0,1] and equals 1 on [2,inf), and Stilde the remainder
defined by the difference (so the three parts resum exactly).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .bloch import CriticalCurve, EigensolverFailure, eig_with_left, omega_indices
from .profile import LinearizedOperator, WaveProfile
from .spectral import Field2, PeriodicGrid, ScalarField, derivative_values, inner_product


# ---------------------------------------------------------------------------
# smooth cutoffs built from the C-infinity bump h(s) = exp(-1/s)

def _h(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos])
    return out


def _h_prime(s):
    s = np.asarray(s, dtype=float)
    out = np.zeros_like(s)
    pos = s > 0
    out[pos] = np.exp(-1.0 / s[pos]) / s[pos] ** 2
    return out


def smoothstep(s):
    """C-infinity monotone step: 0 for s <= 0, 1 for s >= 1."""
    s = np.asarray(s, dtype=float)
    num = _h(s)
    den = num + _h(1.0 - s)
    out = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return out if out.shape else float(out)


def smoothstep_prime(s):
    s = np.asarray(s, dtype=float)
    hs, h1 = _h(s), _h(1.0 - s)
    dhs, dh1 = _h_prime(s), _h_prime(1.0 - s)
    den = (hs + h1) ** 2
    num = dhs * h1 + hs * dh1
    out = np.divide(num, den, out=np.zeros_like(num), where=den > 0)
    return out if out.shape else float(out)


class CutoffChi:
    """Temporal switch: chi = 0 on [0,1], 1 on [2,inf), smooth in between."""

    def value(self, t):
        return smoothstep(np.asarray(t, dtype=float) - 1.0)

    def derivative(self, t):
        return smoothstep_prime(np.asarray(t, dtype=float) - 1.0)

    __call__ = value


class CutoffRho:
    """Frequency cutoff: 1 for |xi| <= xi1/2, 0 for |xi| >= xi1, smooth."""

    def __init__(self, xi1: float):
        if not xi1 > 0:
            raise ValueError("xi1 must be positive")
        self.xi1 = float(xi1)

    def value(self, xi):
        s = 2.0 - 2.0 * np.abs(np.asarray(xi, dtype=float)) / self.xi1
        return smoothstep(s)

    __call__ = value


# ---------------------------------------------------------------------------
# per-frequency blocks

class _Block:
    """One Bloch frequency's worth of the NT-grid discretization.

    Propagators e^{matrix t} come from the eigendecomposition when it
    reproduces a reference expm to near roundoff (almost always), with a
    cached scaling-and-squaring fallback otherwise.
    """

    def __init__(self, k: int, xi: float, positions: np.ndarray, ell: np.ndarray,
                 matrix: np.ndarray):
        self.k = int(k)
        self.xi = float(xi)
        self.positions = positions
        self.ell = ell
        self.matrix = matrix
        self._cache: dict = {}
        lam, V = np.linalg.eig(matrix)
        self.eigvals = lam
        try:
            Vinv = np.linalg.inv(V)
            ref = scipy.linalg.expm(matrix)
            err = np.max(np.abs((V * np.exp(lam)) @ Vinv - ref))
            self._eig_ok = err < 1e-10 * max(1.0, np.max(np.abs(ref)))
        except np.linalg.LinAlgError:
            Vinv = None
            self._eig_ok = False
        self._V, self._Vinv = V, Vinv

    def propagator(self, t: float) -> np.ndarray:
        key = float(t)
        if key not in self._cache:
            if key == 0.0:
                self._cache[key] = np.eye(self.matrix.shape[0], dtype=complex)
            elif self._eig_ok:
                self._cache[key] = (self._V * np.exp(self.eigvals * key)) @ self._Vinv
            else:
                self._cache[key] = scipy.linalg.expm(self.matrix * key)
        return self._cache[key]


@dataclass
class _PrincipalData:
    """Critical-curve eigendata at one Omega_N frequency inside supp(rho)."""

    k: int
    xi: float
    lam: complex
    adjoint: np.ndarray   # coefficients of tilde Phi_xi on symmetric modes
    modes: np.ndarray
    rho: float


class SemigroupKernel:
    """Cached Bloch data enabling O(N) applications of e^{A t} on [0, NT].

    Construction is the mutable phase; afterwards all apply methods are
    read-only and safe to share across workers.
    """

    def __init__(self, wave: WaveProfile, N: int, curve: CriticalCurve,
                 chi: CutoffChi | None = None, rho: CutoffRho | None = None):
        self.wave = wave
        self.N = int(N)
        self.curve = curve
        self.chi = chi or CutoffChi()
        self.rho = rho or CutoffRho(curve.xi1)
        T = wave.params.period
        n = wave.grid.n_points
        self.grid = PeriodicGrid(self.N * n, self.N * T)
        self._op = LinearizedOperator.for_wave(wave)
        self._build_blocks()
        self._build_principal()
        self._phi_prime_values = np.tile(wave.derivative().values, (self.N, 1))
        self._adjoint0_values = self._adjoint_zero_values()

    # -- construction ------------------------------------------------------
    def _build_blocks(self):
        """One dense block per residue class of the NT grid's mode set.

        The grid's Nyquist bin (mode -n_N/2, always residue 0) represents the
        cosine mode, i.e. the coefficient pair at +-n_N/2 with equal halves.
        The k = 0 block is therefore assembled on the symmetric extended
        window and conjugated by the split/fold maps, so each block is
        exactly the grid-restricted generator and expm composes exactly.
        """
        T = self.wave.params.period
        n_N = self.grid.n_points
        all_modes = self.grid.mode_indices
        self.blocks = []
        for k in omega_indices(self.N):
            xi = 2.0 * np.pi * k / (self.N * T)
            mask = np.mod(all_modes - k, self.N) == 0
            positions = np.nonzero(mask)[0]
            ell = (all_modes[positions] - k) // self.N
            order = np.argsort(ell)
            positions, ell = positions[order], ell[order]
            if k == 0:
                A = self._nyquist_folded_matrix(ell)
            else:
                A = self._op.dense_fourier(ell, xi)
            self.blocks.append(_Block(int(k), xi, positions, ell, A))

    def _nyquist_folded_matrix(self, ell: np.ndarray) -> np.ndarray:
        """Galerkin matrix on the residue-0 modes with a cosine Nyquist bin.

        Built as S M_ext G where M_ext lives on the symmetric window
        [-n/2, ..., +n/2], G splits the Nyquist bin into equal +-n/2 halves
        and S folds them back.
        """
        L = ell.size
        ell_ext = np.concatenate([ell, [-ell[0]]])  # append +n/2
        M_ext = self._op.dense_fourier(ell_ext, 0.0)
        G1 = np.zeros((L + 1, L))
        G1[:L, :L] = np.eye(L)
        G1[0, 0] = 0.5       # -n/2 entry gets half the grid bin
        G1[L, 0] = 0.5       # +n/2 entry gets the other half
        S1 = np.zeros((L, L + 1))
        S1[:, :L] = np.eye(L)
        S1[0, L] = 1.0       # fold +n/2 back onto the grid bin
        G = scipy.linalg.block_diag(G1, G1)
        S = scipy.linalg.block_diag(S1, S1)
        return S @ M_ext @ G

    def _build_principal(self):
        """Eigendata at the Omega_N frequencies carrying the phase dynamics.

        Computed for k > 0 and mirrored by conjugation to -k, which enforces
        lambda_c(-xi) = conj(lambda_c(xi)) and keeps all outputs real.
        """
        T = self.wave.params.period
        M = self.curve.M
        modes = np.arange(-M, M + 1)
        from .bloch import hermitian_pairing, phi_prime_coefficients

        ppv = phi_prime_coefficients(self.wave, modes)
        self.principal: list[_PrincipalData] = []
        for k in omega_indices(self.N):
            if k <= 0:
                continue
            xi = 2.0 * np.pi * k / (self.N * T)
            r = float(self.rho(xi))
            if r == 0.0:
                continue
            lam_all, vl, vr = eig_with_left(self._op.dense_fourier(modes, xi))
            pred = self.curve.quadratic_model(xi)
            i = int(np.argmin(np.abs(lam_all - pred)))
            rest = np.delete(lam_all, i)
            if rest.size and np.min(np.abs(rest - lam_all[i])) < 1e-10:
                raise EigensolverFailure(f"critical eigenvalue ambiguous at xi={xi}")
            vec, adj = vr[:, i], vl[:, i]
            # scale Phi_xi onto phi' (Phi_xi = phi' + O(xi)); this also fixes
            # the phase so <Phi_0, Phi_xi> > 0
            c = hermitian_pairing(T, vec, ppv) / hermitian_pairing(T, vec, vec)
            vec = vec * c
            pairing = hermitian_pairing(T, adj, vec)
            adj = adj / np.conj(pairing)
            self.principal.append(_PrincipalData(int(k), xi, complex(lam_all[i]), adj, modes, r))
            # mirror to -k when it lies in Omega_N
            if -k in omega_indices(self.N):
                adj_m = np.conj(adj[::-1])
                self.principal.append(
                    _PrincipalData(-int(k), -xi, complex(np.conj(lam_all[i])), adj_m, modes, r)
                )

    def _adjoint_zero_values(self) -> np.ndarray:
        """tilde Phi_0 sampled on the NT grid (real 2-component field values)."""
        _, _, adj = self.curve.eigendata_at(0.0)
        M = self.curve.M
        m = 2 * M + 1
        n = self.wave.grid.n_points
        grid_modes = self.wave.grid.mode_indices
        coeff = np.zeros((n, 2), dtype=complex)
        lookup = {k: i for i, k in enumerate(grid_modes)}
        for j, k in enumerate(range(-M, M + 1)):
            if k in lookup:
                coeff[lookup[k], 0] = adj[j]
                coeff[lookup[k], 1] = adj[m + j]
        vals = np.fft.ifft(coeff * n, axis=0)
        if np.max(np.abs(vals.imag)) > 1e-9 * max(1.0, np.max(np.abs(vals.real))):
            raise EigensolverFailure("adjoint zero eigenfunction is not real")
        return np.tile(vals.real, (self.N, 1))

    # -- Bloch bookkeeping ---------------------------------------------------
    def bloch_coefficients(self, v: Field2) -> dict:
        """B_T(v)(xi, .) per Omega_N frequency, as T-torus coefficient vectors.

        The slice at index k holds b_l = NT * c_{k + l N} for both components
        stacked, matching the inverse Bloch formula normalization.
        """
        c = np.fft.fft(v.values, axis=0) / self.grid.n_points
        NT = self.grid.period
        out = {}
        for blk in self.blocks:
            b = NT * np.concatenate([c[blk.positions, 0], c[blk.positions, 1]])
            out[blk.k] = (b, blk.ell)
        return out

    def bloch_resum(self, slices: dict) -> Field2:
        """Inverse Bloch formula: g = (1/NT) sum_xi e^{i xi x} B_T(g)(xi, x)."""
        n_N = self.grid.n_points
        c = np.zeros((n_N, 2), dtype=complex)
        NT = self.grid.period
        for blk in self.blocks:
            b, _ = slices[blk.k]
            L = blk.positions.size
            c[blk.positions, 0] += b[:L] / NT
            c[blk.positions, 1] += b[L:] / NT
        vals = np.fft.ifft(c * n_N, axis=0)
        return Field2(self.grid, vals.real)

    # -- operator applications ----------------------------------------------
    def apply_semigroup(self, t: float, v: Field2) -> Field2:
        """e^{A[phi] t} v via per-frequency matrix exponentials."""
        if t < 0:
            raise ValueError("t must be nonnegative")
        if v.grid != self.grid:
            raise ValueError("field grid does not match kernel grid")
        c = np.fft.fft(v.values, axis=0) / self.grid.n_points
        out = np.zeros_like(c)
        for blk in self.blocks:
            L = blk.positions.size
            b = np.concatenate([c[blk.positions, 0], c[blk.positions, 1]])
            w = blk.propagator(float(t)) @ b
            out[blk.positions, 0] = w[:L]
            out[blk.positions, 1] = w[L:]
        vals = np.fft.ifft(out * self.grid.n_points, axis=0)
        return Field2(self.grid, vals.real)

    def apply_zero_projection(self, v: Field2) -> Field2:
        """P0 v = (1/N) phi' <tilde Phi_0, v> over [0, NT]."""
        amount = inner_product(Field2(self.grid, self._adjoint0_values), v) / self.N
        return Field2(self.grid, amount * self._phi_prime_values)

    def zero_mode_amplitude(self, v: Field2) -> float:
        """<tilde Phi_0, v> over [0, NT] (the sigma_ell of the linear theory)."""
        return inner_product(Field2(self.grid, self._adjoint0_values), v)

    def principal_coefficients(self, v: Field2, k_deriv: int = 0) -> dict:
        """Projections <tilde Phi_xi, B_T(d_x^k v)(xi, .)> for the principal xi."""
        w = derivative_values(v.values, self.grid.period, k_deriv)
        c = np.fft.fft(w, axis=0) / self.grid.n_points
        T = self.wave.params.period
        NT = self.grid.period
        by_k = {blk.k: blk for blk in self.blocks}
        out = {}
        for pd in self.principal:
            blk = by_k[pd.k]
            m = pd.modes.size
            # align the symmetric eigendata window with the block's mode list
            sel = np.isin(blk.ell, pd.modes)
            idx = np.searchsorted(pd.modes, blk.ell[sel])
            b_r = NT * c[blk.positions[sel], 0]
            b_i = NT * c[blk.positions[sel], 1]
            out[pd.k] = T * (
                np.conj(pd.adjoint[idx]) @ b_r + np.conj(pd.adjoint[m + idx]) @ b_i
            )
        return out

    def assemble_principal_field(self, coeff_by_k: dict) -> ScalarField:
        """Scalar field sum_k coeff_k e^{i xi_k x} / (NT) from per-k scalars."""
        n_N = self.grid.n_points
        c = np.zeros(n_N, dtype=complex)
        for k, val in coeff_by_k.items():
            c[k % n_N] += val / self.grid.period
        vals = np.fft.ifft(c * n_N)
        return ScalarField(self.grid, vals.real)

    def apply_principal(self, t: float, v: Field2, l: int = 0, j: int = 0,
                        k: int = 0, tilde: bool = False) -> ScalarField:
        """d_x^l d_t^j s_{p,N}(t) d_x^k v (scalar phase field).

        The tilde variant applies the chi switch: for j = 0 a chi(t) factor,
        for j = 1 the product rule chi' s_p + chi d_t s_p.
        """
        if t < 0:
            raise ValueError("t must be nonnegative")
        if l + 2 * j + k > 6:
            raise ValueError("derivative budget l + 2j + k <= 6 exceeded")
        if tilde and j > 1:
            raise NotImplementedError("tilde variant implemented for j <= 1")
        proj = self.principal_coefficients(v, k_deriv=k)
        coeff = {}
        for pd in self.principal:
            base = pd.rho * (1j * pd.xi) ** l * np.exp(pd.lam * t) * proj[pd.k]
            if not tilde:
                coeff[pd.k] = base * pd.lam**j
            elif j == 0:
                coeff[pd.k] = base * float(self.chi(t))
            else:
                coeff[pd.k] = base * (
                    float(self.chi.derivative(t)) + float(self.chi(t)) * pd.lam
                )
        return self.assemble_principal_field(coeff)

    def apply_remainder(self, t: float, v: Field2) -> Field2:
        """Stilde(t) v = e^{A t} v - chi(t) P0 v - phi' stilde_p(t) v."""
        full = self.apply_semigroup(t, v)
        proj = self.apply_zero_projection(v)
        phase = self.apply_principal(t, v, tilde=True)
        chi_t = float(self.chi(t))
        vals = full.values - chi_t * proj.values - phase.values[:, None] * self._phi_prime_values
        return Field2(self.grid, vals)

    def phi_prime_times(self, scalar: ScalarField) -> Field2:
        """phi' multiplied by a scalar phase field (pointwise)."""
        return Field2(self.grid, scalar.values[:, None] * self._phi_prime_values)


def build_kernel(wave: WaveProfile, N: int, curve: CriticalCurve) -> SemigroupKernel:
    return SemigroupKernel(wave, N, curve)


# ---------------------------------------------------------------------------
# Riemann-sum envelope

def riemann_envelope(n: int, d: float, t: float, N: int, T: float) -> float:
    """(1/N) sum_{xi in Omega_N} xi^{2n} exp(-2 d xi^2 t), evaluated exactly."""
    if n < 0 or n > 3:
        raise ValueError("n must be in 0..3")
    if d <= 0:
        raise ValueError("d must be positive")
    xi = 2.0 * np.pi * omega_indices(N) / (N * T)
    return float(np.sum(xi ** (2 * n) * np.exp(-2.0 * d * xi**2 * t)) / N)


# ---------------------------------------------------------------------------
# decay sweep serialization

def write_decay_csv(path, t_values, columns: dict, metadata: dict | None = None) -> None:
    """Columns t, norm_full, norm_minus_P, norm_minus_phase, norm_remainder
    (plus any extras), with a sidecar JSON metadata file."""
    import csv as _csv

    names = list(columns)
    with open(path, "w", newline="") as f:
        w = _csv.writer(f)
        w.writerow(["t"] + names)
        for i, t in enumerate(t_values):
            w.writerow([repr(float(t))] + [repr(float(columns[name][i])) for name in names])
    if metadata is not None:
        with open(str(path) + ".meta.json", "w") as f:
            json.dump(metadata, f, indent=1)
