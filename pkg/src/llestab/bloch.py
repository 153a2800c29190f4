"""Floquet-Bloch spectral analysis of the linearization about a periodic wave.

The linearization A[phi] on [0, NT] decomposes over the Bloch frequencies

    Omega_N = { xi in [-pi/T, pi/T) : exp(i xi N T) = 1 },

with the Bloch operator A_xi[phi] obtained from A[phi] by the substitution
d_x -> d_x + i xi, acting on T-periodic pairs. This module assembles the
Bloch matrices in Fourier-Galerkin form, certifies diffusive spectral
stability (left-half-plane spectrum, quadratic touching -theta xi^2, simple
zero eigenvalue carried by phi'), tracks the critical eigenvalue curve
lambda_c(xi) = i a xi - d xi^2 + O(xi^3) with its eigenfunctions, and
measures the N-dependent subharmonic spectral gap delta_N.

Eigenvector normalization uses the Hermitian pairing (conjugate-linear first
slot); on real data at xi = 0 it reduces to the unconjugated real pairing.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .profile import LinearizedOperator, WaveProfile
from .spectral import to_coeffs


class EigensolverFailure(RuntimeError):
    """The dense eigensolver did not converge."""


class ResolutionSuspectError(RuntimeError):
    """Doubling the mode count moved reported eigenvalues; M too small."""


class CurveTrackingLostError(RuntimeError):
    """Eigenvector continuity between adjacent xi samples broke down."""


ZERO_EIG_ABS_TOL = 1e-7
ZERO_EIG_OVERLAP = 0.99


def omega_indices(N: int) -> np.ndarray:
    """Integer indices k with xi_k = 2 pi k / (N T) in [-pi/T, pi/T); |Omega_N| = N."""
    lo = -(N // 2)
    return np.arange(lo, lo + N)


def omega_frequencies(N: int, T: float) -> np.ndarray:
    return 2.0 * np.pi * omega_indices(N) / (N * T)


def symmetric_modes(M: int) -> np.ndarray:
    return np.arange(-M, M + 1)


@dataclass
class BlochOperator:
    """Dense Bloch matrix at frequency xi over T-periodic Fourier modes."""

    xi: float
    matrix: np.ndarray
    modes: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.matrix.real)) or not np.all(np.isfinite(self.matrix.imag)):
            raise ValueError("Bloch matrix entries must be finite")

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def real_basis_matrix(self) -> np.ndarray:
        """The matrix conjugated into the real (cos/sin) mode basis.

        At xi = 0 the operator maps real fields to real fields, so this
        matrix is real up to roundoff.
        """
        m = self.modes.size
        U = np.zeros((m, m), dtype=complex)
        idx = {k: i for i, k in enumerate(self.modes)}
        s = 1.0 / np.sqrt(2.0)
        done = set()
        for i, k in enumerate(self.modes):
            if k == 0:
                U[i, i] = 1.0
                done.add(0)
            elif k > 0 and -k in idx and k not in done:
                j = idx[-k]
                # cos column and sin column from the e^{+-ikx} pair
                U[i, i], U[j, i] = s, s
                U[i, j], U[j, j] = -1j * s, 1j * s
                done.add(k)
        big = scipy.linalg.block_diag(U, U)
        return big.conj().T @ self.matrix @ big


def assemble_bloch(wave: WaveProfile, xi: float, M: int) -> BlochOperator:
    """Bloch matrix of size 2(2M+1) at frequency xi in [-pi/T, pi/T]."""
    T = wave.params.period
    if abs(xi) > np.pi / T * (1 + 1e-12):
        raise ValueError(f"|xi| = {abs(xi)} exceeds pi/T = {np.pi / T}")
    if M < 8:
        raise ValueError("M must be at least 8")
    op = LinearizedOperator.for_wave(wave)
    modes = symmetric_modes(M)
    return BlochOperator(xi, op.dense_fourier(modes, xi), modes)


def assemble_bloch_windowed(op: LinearizedOperator, xi: float, modes: np.ndarray) -> BlochOperator:
    """Bloch matrix on an explicit T-mode window (internal; used by the
    semigroup kernel so per-frequency blocks tile the NT grid exactly)."""
    return BlochOperator(xi, op.dense_fourier(np.asarray(modes, int), xi), np.asarray(modes, int))


def phi_prime_coefficients(wave: WaveProfile, modes: np.ndarray) -> np.ndarray:
    """Fourier coefficients of phi' stacked (r, i) on the given mode window."""
    c = to_coeffs(wave.derivative()).modes
    grid_modes = wave.grid.mode_indices
    lookup = {k: i for i, k in enumerate(grid_modes)}
    out = np.zeros(2 * modes.size, dtype=complex)
    for j, k in enumerate(modes):
        if k in lookup:
            out[j] = c[lookup[k], 0]
            out[modes.size + j] = c[lookup[k], 1]
    return out


def hermitian_pairing(T: float, u: np.ndarray, v: np.ndarray) -> complex:
    """<u, v> = integral of conj(u) . v over [0, T] for stacked coefficient vectors."""
    return complex(T * np.vdot(u, v))


def eig_with_left(matrix: np.ndarray):
    try:
        lam, vl, vr = scipy.linalg.eig(matrix, left=True, right=True)
    except (scipy.linalg.LinAlgError, ValueError) as exc:
        raise EigensolverFailure(str(exc)) from exc
    if not np.all(np.isfinite(lam)):
        raise EigensolverFailure("non-finite eigenvalues returned")
    return lam, vl, vr


def zero_mode_index(lam: np.ndarray, vr: np.ndarray, phi_prime_vec: np.ndarray) -> int:
    """Index of the translation eigenvalue: |lambda| < tol and eigenvector
    overlapping phi' (both required, per the zero-mode convention)."""
    ppnorm = np.linalg.norm(phi_prime_vec)
    if ppnorm == 0.0:
        raise EigensolverFailure("phi' vanishes: no translation mode (constant state)")
    order = np.argsort(np.abs(lam))
    ref = phi_prime_vec / ppnorm
    for i in order[:4]:
        if np.abs(lam[i]) >= ZERO_EIG_ABS_TOL:
            break
        v = vr[:, i] / np.linalg.norm(vr[:, i])
        if np.abs(np.vdot(ref, v)) > ZERO_EIG_OVERLAP:
            return int(i)
    raise EigensolverFailure(
        f"no zero mode found (smallest |lambda| = {np.abs(lam[order[0]]):.3e})"
    )


# ---------------------------------------------------------------------------
# stability certification

@dataclass
class BlochStabilityReport:
    """Outcome of the three diffusive-stability conditions on a xi grid."""

    wave: WaveProfile
    M: int
    xi_grid: np.ndarray
    passed_d1: bool
    passed_d2: bool
    passed_d3: bool
    coverage_ok: bool
    theta: float
    delta_by_N: dict
    worst_d1: tuple  # (xi, lambda) with largest real part among non-zero modes
    worst_d2: tuple  # (xi, lambda) attaining the theta bound
    zero_eigenvalue: complex
    zero_gap: float  # second-smallest |lambda| at xi = 0
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.coverage_ok and self.passed_d1 and self.passed_d2 and self.passed_d3

    def to_json(self) -> str:
        return json.dumps(
            {
                "passed": self.passed,
                "conditions": {
                    "D1": self.passed_d1,
                    "D2": self.passed_d2,
                    "D3": self.passed_d3,
                    "coverage": self.coverage_ok,
                },
                "theta": self.theta,
                "delta_by_N": {str(k): v for k, v in self.delta_by_N.items()},
                "worst_offenders": {
                    "D1": {"xi": self.worst_d1[0], "lambda": [self.worst_d1[1].real, self.worst_d1[1].imag]},
                    "D2": {"xi": self.worst_d2[0], "lambda": [self.worst_d2[1].real, self.worst_d2[1].imag]},
                },
                "zero_eigenvalue": [self.zero_eigenvalue.real, self.zero_eigenvalue.imag],
                "zero_gap": self.zero_gap,
                "M": self.M,
                "n_xi": int(len(self.xi_grid)),
                "notes": self.notes,
            },
            indent=1,
        )


D1_TOL = 1e-9
D2_SLACK = 1e-9
D3_GAP = 1e-6
D3_VECTOR_TOL = 1e-7
RESOLUTION_SHIFT_TOL = 1e-7


def certify_stability(wave: WaveProfile, xi_grid: np.ndarray, M: int = 32,
                      N_list: tuple = (1, 2, 4, 8, 16),
                      check_resolution: bool = True) -> BlochStabilityReport:
    """Evaluate the three diffusive-stability conditions on a xi grid.

    (D1) all eigenvalues in the closed left half plane (tolerance 1e-9), the
         origin attained only by the translation mode at xi = 0;
    (D2) the largest theta > 0 with Re lambda <= -theta xi^2 + 1e-9 grid-wide;
    (D3) the zero eigenvalue of A_0 is simple (gap > 1e-6) and its
         eigenvector is phi' up to scaling (residual <= 1e-7).
    """
    xi_grid = np.sort(np.asarray(xi_grid, dtype=float))
    T = wave.params.period
    xi_grid[np.abs(xi_grid) < 1e-13 / T] = 0.0  # snap float-noise zeros
    notes = []
    coverage_ok = True
    if 0.0 not in xi_grid:
        raise ValueError("xi grid must contain 0")
    pos = xi_grid[xi_grid > 0]
    neg = -xi_grid[xi_grid < 0]
    # the Bloch cell is [-pi/T, pi/T), so -pi/T may legitimately be unpaired
    unpaired = [x for x in pos if np.min(np.abs(neg - x)) > 1e-12] if neg.size else list(pos)
    if unpaired:
        notes.append("xi grid is not symmetric about 0")
    if len(xi_grid) < 8 or np.max(np.abs(xi_grid)) < 0.5 * np.pi / T:
        coverage_ok = False
        notes.append("xi grid does not resolve [-pi/T, pi/T): report cannot pass")

    op = LinearizedOperator.for_wave(wave)
    modes = symmetric_modes(M)
    ppv = phi_prime_coefficients(wave, modes)

    max_re = {}
    spectra = {}
    zero_eig = None
    zero_gap = np.inf
    d3_ok = False
    for xi in xi_grid:
        lam, _, vr = eig_with_left(op.dense_fourier(modes, xi))
        spectra[xi] = lam
        if xi == 0.0:
            i0 = zero_mode_index(lam, vr, ppv)
            zero_eig = lam[i0]
            others = np.abs(np.delete(lam, i0))
            zero_gap = float(np.min(others))
            v = vr[:, i0] / np.linalg.norm(vr[:, i0])
            ref = ppv / np.linalg.norm(ppv)
            proj = np.vdot(ref, v)
            resid = float(np.linalg.norm(v - proj * ref))
            d3_ok = zero_gap > D3_GAP and resid <= D3_VECTOR_TOL
            lam_rest = np.delete(lam, i0)
            max_re[xi] = float(np.max(lam_rest.real)) if lam_rest.size else -np.inf
        else:
            max_re[xi] = float(np.max(lam.real))

    if check_resolution:
        # the reported quantities are the per-xi spectral bounds (entering D1
        # and D2) and the zero mode; verify their real parts are converged
        modes2 = symmetric_modes(2 * M)
        for xi in (0.0, float(xi_grid[0]), float(xi_grid[len(xi_grid) // 3])):
            lam2, _, vr2 = eig_with_left(op.dense_fourier(modes2, xi))
            ppv2 = phi_prime_coefficients(wave, modes2)
            if xi == 0.0:
                i2 = zero_mode_index(lam2, vr2, ppv2)
                if np.abs(lam2[i2] - zero_eig) > RESOLUTION_SHIFT_TOL:
                    raise ResolutionSuspectError(
                        f"zero eigenvalue moved by {np.abs(lam2[i2] - zero_eig):.2e} "
                        "when doubling M"
                    )
                lam2 = np.delete(lam2, i2)
            shift = abs(float(np.max(lam2.real)) - max_re[xi])
            if shift > RESOLUTION_SHIFT_TOL:
                raise ResolutionSuspectError(
                    f"spectral bound at xi={xi} moved by {shift:.2e} when doubling M"
                )

    # D1: spectrum in the closed left half plane, origin only at the zero mode
    worst_d1 = (0.0, zero_eig if zero_eig is not None else 0j)
    d1_ok = True
    worst_val = -np.inf
    for xi in xi_grid:
        lam = spectra[xi]
        if xi == 0.0:
            # exclude the already-identified zero mode
            i0 = int(np.argmin(np.abs(lam - zero_eig)))
            lam = np.delete(lam, i0)
        m = float(np.max(lam.real)) if lam.size else -np.inf
        if m > worst_val:
            worst_val = m
            worst_d1 = (float(xi), lam[int(np.argmax(lam.real))])
        if m > D1_TOL:
            d1_ok = False

    # D2: largest theta with Re <= -theta xi^2 + slack on the grid
    theta = np.inf
    worst_d2 = worst_d1
    for xi in xi_grid:
        if xi == 0.0:
            continue
        ratio = (-max_re[xi] + D2_SLACK) / xi**2
        if ratio < theta:
            theta = ratio
            lam = spectra[xi]
            worst_d2 = (float(xi), lam[int(np.argmax(lam.real))])
    theta = float(theta) if np.isfinite(theta) else 0.0
    d2_ok = theta > 0.0

    report = BlochStabilityReport(
        wave=wave, M=M, xi_grid=xi_grid,
        passed_d1=d1_ok, passed_d2=d2_ok and coverage_ok, passed_d3=d3_ok,
        coverage_ok=coverage_ok,
        theta=theta if d2_ok else 0.0,
        delta_by_N={},
        worst_d1=worst_d1, worst_d2=worst_d2,
        zero_eigenvalue=complex(zero_eig), zero_gap=zero_gap, notes=notes,
    )
    if report.passed:
        for N in N_list:
            report.delta_by_N[int(N)] = subharmonic_gap_raw(wave, N, M)
    return report


def subharmonic_gap_raw(wave: WaveProfile, N: int, M: int) -> float:
    """delta_N = -max Re over the nonzero NT-periodic spectrum, via Omega_N."""
    op = LinearizedOperator.for_wave(wave)
    modes = symmetric_modes(M)
    ppv = phi_prime_coefficients(wave, modes)
    worst = -np.inf
    for xi in omega_frequencies(N, wave.params.period):
        lam, _, vr = eig_with_left(op.dense_fourier(modes, xi))
        if xi == 0.0:
            i0 = zero_mode_index(lam, vr, ppv)
            lam = np.delete(lam, i0)
        if lam.size:
            worst = max(worst, float(np.max(lam.real)))
    return -worst


def subharmonic_gap(curve: "CriticalCurve", report: BlochStabilityReport, N: int) -> float:
    """The spectral gap delta_N > 0 for NT-periodic perturbations.

    Requires a passing stability report; computed exactly over the discrete
    Bloch set Omega_N (the critical curve is used by callers for the
    asymptotic cross-check delta_N ~ d (2 pi / NT)^2).
    """
    if not report.passed:
        raise ValueError("stability report did not pass; delta_N undefined")
    delta = subharmonic_gap_raw(report.wave, N, report.M)
    if delta <= 0:
        raise ValueError(f"computed nonpositive gap {delta} for N={N}")
    return delta


# ---------------------------------------------------------------------------
# the critical curve

@dataclass
class CriticalCurve:
    """The analytic eigenvalue branch through zero with its eigenfunctions.

    lambda_c(xi) = i a xi - d xi^2 + O(|xi|^3); Phi_xi right eigenfunctions
    (phase-fixed against Phi_0 = phi'), adjoint eigenfunctions normalized so
    <tilde Phi_xi, Phi_xi> = 1 under the Hermitian pairing.
    """

    wave: WaveProfile
    M: int
    xi_samples: np.ndarray
    lambda_samples: np.ndarray
    eigenfunctions: np.ndarray          # shape (n_samples, 2(2M+1))
    adjoint_eigenfunctions: np.ndarray  # same shape
    a: float
    d: float
    xi1: float

    def eigendata_at(self, xi: float):
        i = int(np.argmin(np.abs(self.xi_samples - xi)))
        if abs(self.xi_samples[i] - xi) > 1e-12:
            raise KeyError(f"xi = {xi} is not a curve sample")
        return self.lambda_samples[i], self.eigenfunctions[i], self.adjoint_eigenfunctions[i]

    def quadratic_model(self, xi: np.ndarray) -> np.ndarray:
        xi = np.asarray(xi, dtype=float)
        return 1j * self.a * xi - self.d * xi**2

    def to_json(self) -> str:
        return json.dumps(
            {
                "a": self.a,
                "d": self.d,
                "xi1": self.xi1,
                "M": self.M,
                "xi_samples": self.xi_samples.tolist(),
                "lambda_samples": [[z.real, z.imag] for z in self.lambda_samples],
            },
            indent=1,
        )


OVERLAP_MIN = 0.9
XI1_FLOOR_FRACTION = 0.2


def _tracked_eigendata(op: LinearizedOperator, modes: np.ndarray, xi: float,
                       prev_vec: np.ndarray, T: float):
    lam, vl, vr = eig_with_left(op.dense_fourier(modes, xi))
    overlaps = np.abs(prev_vec.conj() @ vr) / (
        np.linalg.norm(prev_vec) * np.linalg.norm(vr, axis=0)
    )
    i = int(np.argmax(overlaps))
    if overlaps[i] < OVERLAP_MIN:
        raise CurveTrackingLostError(
            f"eigenvector overlap {overlaps[i]:.3f} < {OVERLAP_MIN} at xi = {xi}"
        )
    lam_rest = np.delete(lam, i)
    isolation = float(np.min(np.abs(lam_rest - lam[i]))) if lam_rest.size else np.inf
    return lam[i], vr[:, i], vl[:, i], isolation


def critical_curve(wave: WaveProfile, xi_samples: np.ndarray, M: int = 32) -> CriticalCurve:
    """Track lambda_c(xi) and its (adjoint) eigenfunctions over the samples.

    Samples are marched outward from 0 by eigenvector-overlap continuation
    (raising CurveTrackingLost below overlap 0.9). The isolation radius xi1 is
    the largest sampled radius within which the curve stays separated from the
    rest of the spectrum by twice |lambda_c|, floored at 0.2 pi/T. The
    expansion coefficients (a, d) are fitted on |xi| <= xi1/2.
    """
    T = wave.params.period
    xi_samples = np.sort(np.asarray(xi_samples, dtype=float))
    if 0.0 not in xi_samples:
        raise ValueError("xi samples must include 0")
    op = LinearizedOperator.for_wave(wave)
    modes = symmetric_modes(M)
    ppv = phi_prime_coefficients(wave, modes)

    lam0_all, vl0, vr0 = eig_with_left(op.dense_fourier(modes, 0.0))
    i0 = zero_mode_index(lam0_all, vr0, ppv)
    phi0 = vr0[:, i0]
    # scale Phi_0 to the phi' coefficient vector itself
    scale = hermitian_pairing(T, phi0, ppv) / hermitian_pairing(T, phi0, phi0)
    phi0 = phi0 * scale

    n = xi_samples.size
    lams = np.zeros(n, dtype=complex)
    vecs = np.zeros((n, phi0.size), dtype=complex)
    adjs = np.zeros_like(vecs)
    isolation = np.zeros(n)

    order = np.argsort(np.abs(xi_samples) + 1e-15 * np.sign(xi_samples))
    prev_pos = prev_neg = phi0
    for rank in order:
        xi = xi_samples[rank]
        prev = prev_pos if xi >= 0 else prev_neg
        if xi == 0.0:
            lam, vec, adj = lam0_all[i0], phi0, vl0[:, i0]
            lam_rest = np.delete(lam0_all, i0)
            iso = float(np.min(np.abs(lam_rest - lam)))
        else:
            lam, vec, adj, iso = _tracked_eigendata(op, modes, xi, prev, T)
            # scale onto phi' (Phi_xi = phi' + O(xi)); makes <Phi_0, Phi_xi> > 0
            c = hermitian_pairing(T, vec, phi0) / hermitian_pairing(T, vec, vec)
            vec = vec * c
        pairing = hermitian_pairing(T, adj, vec)
        if np.abs(pairing) < 1e-13:
            raise EigensolverFailure(f"degenerate adjoint pairing at xi = {xi}")
        adj = adj / np.conj(pairing)
        lams[rank] = lam
        vecs[rank] = vec
        adjs[rank] = adj
        isolation[rank] = iso
        if xi >= 0:
            prev_pos = vec
        if xi <= 0:
            prev_neg = vec

    # isolation radius
    ok = isolation > 2.0 * np.abs(lams)
    xi1 = 0.0
    for r in np.sort(np.abs(xi_samples)):
        sel = np.abs(xi_samples) <= r + 1e-15
        if np.all(ok[sel]):
            xi1 = float(r)
        else:
            break
    xi1 = max(xi1, XI1_FLOOR_FRACTION * np.pi / T)

    sel = (np.abs(xi_samples) <= xi1 / 2) & (xi_samples != 0.0)
    xs = xi_samples[sel]
    if xs.size < 4:
        raise ValueError("too few samples inside xi1/2 to fit (a, d)")
    ys = lams[sel]
    # fit with one correction order beyond the quadratic model
    A_im = np.column_stack([xs, xs**3])
    a_fit = np.linalg.lstsq(A_im, ys.imag, rcond=None)[0][0]
    A_re = np.column_stack([xs**2, xs**4])
    d_fit = -np.linalg.lstsq(A_re, ys.real, rcond=None)[0][0]

    return CriticalCurve(
        wave=wave, M=M, xi_samples=xi_samples, lambda_samples=lams,
        eigenfunctions=vecs, adjoint_eigenfunctions=adjs,
        a=float(a_fit), d=float(d_fit), xi1=xi1,
    )


def ordered_xi_map(fn, xi_values, workers: int | None = None) -> list:
    """Apply fn to each xi, in parallel when workersexceed 1, with results
    ordered by the input sequence regardless of completion order."""
    xi_values = list(xi_values)
    if not workers or workers <= 1:
        return [fn(xi) for xi in xi_values]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, xi_values))


# ---------------------------------------------------------------------------
# serialization

def write_spectra_csv(path, spectra: dict) -> None:
    """CSV of eigenvalue clouds: columns xi, re_lambda, im_lambda, branch_id."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["xi", "re_lambda", "im_lambda", "branch_id"])
        for xi in sorted(spectra):
            lam = np.asarray(spectra[xi])
            for b, z in enumerate(lam[np.argsort(-lam.real)]):
                w.writerow([repr(float(xi)), repr(float(z.real)), repr(float(z.imag)), b])
