"""Stationary periodic waves of the Lugiato-Lefever equation.

The cavity equation

    psi_t = -i beta psi_xx - (1 + i alpha) psi + i |psi|^2 psi + F

has stationary T-periodic solutions phi solving

    -i beta phi'' - (1 + i alpha) phi + i |phi|^2 phi + F = 0.

This module constructs such waves by Newton iteration in Fourier-Galerkin
form, certifies them (residual + spectral tail), and exposes the
linearization about a wave, which doubles as the Newton Jacobian.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .spectral import (
    Field2,
    PeriodicGrid,
    alias_free_product,
    derivative_values,
    l2_norm,
    refine_values,
    scalar_coeffs,
    to_coeffs,
)


class NoConvergenceError(RuntimeError):
    """Newton iteration failed to reach the residual tolerance."""


class SingularJacobianError(RuntimeError):
    """Linear solve in the Newton step failed (fold point suspected)."""


@dataclass(frozen=True)
class LLEParams:
    """Cavity parameters: detuning alpha, dispersion beta, pump F, period T."""

    alpha: float
    beta: float
    forcing: float
    period: float

    def __post_init__(self):
        if self.beta == 0:
            raise ValueError("beta must be nonzero")
        if not self.forcing > 0:
            raise ValueError("forcing must be positive")
        if not self.period > 0:
            raise ValueError("period must be positive")


RESIDUAL_CERT_TOL = 1e-9
TAIL_CERT_TOL = 1e-8


@dataclass
class WaveProfile:
    """A certified T-periodic stationary wave.

    residual_norm is the L^2 norm of the stationarity defect, re-verified at
    construction; the top 10% of Fourier modes must be relatively small so
    eigenvalue computations downstream are trustworthy.
    """

    params: LLEParams
    field: Field2
    residual_norm: float = field(init=False)

    def __post_init__(self):
        if self.field.grid.period != self.params.period:
            raise ValueError("field grid period does not match params.period")
        self.residual_norm = l2_norm(profile_residual(self.field, self.params))
        if self.residual_norm >= RESIDUAL_CERT_TOL:
            raise ValueError(
                f"residual norm {self.residual_norm:.3e} exceeds certificate "
                f"tolerance {RESIDUAL_CERT_TOL:.1e}"
            )
        tail = spectral_tail_fraction(self.field)
        if tail >= TAIL_CERT_TOL:
            raise ValueError(f"spectral tail fraction {tail:.3e} exceeds {TAIL_CERT_TOL:.1e}")

    @property
    def grid(self) -> PeriodicGrid:
        return self.field.grid

    def derivative(self, order: int = 1) -> Field2:
        from .spectral import spectral_derivative

        return spectral_derivative(self.field, order)

    def is_constant(self, tol: float = 1e-8) -> bool:
        return l2_norm(self.derivative()) < tol * max(1.0, l2_norm(self.field))

    def first_harmonic_amplitude(self) -> float:
        c = to_coeffs(self.field).modes
        return float(np.max(np.abs(c[1])) + np.max(np.abs(c[-1])))


def spectral_tail_fraction(f: Field2, fraction: float = 0.1) -> float:
    """Relative magnitude of the top `fraction` of Fourier modes."""
    c = np.abs(to_coeffs(f).modes)
    k = np.abs(f.grid.mode_indices)
    cutoff = (1.0 - fraction) * (f.grid.n_points // 2)
    tail = c[k >= cutoff].sum()
    total = c.sum()
    return float(tail / total) if total > 0 else 0.0


# ---------------------------------------------------------------------------
# residual and linearization

def cubic_term(values: np.ndarray) -> np.ndarray:
    """|phi|^2 * phi in 2-component form, alias-free (zero-padded) product."""
    fr, fi = values[:, 0], values[:, 1]
    fr2 = refine_values(fr, 2)
    fi2 = refine_values(fi, 2)
    mod2 = fr2**2 + fi2**2
    from .spectral import truncate_values

    return np.column_stack(
        [truncate_values(mod2 * fr2, 2), truncate_values(mod2 * fi2, 2)]
    )


def profile_residual(phi: Field2, params: LLEParams) -> Field2:
    """Stationarity defect of phi, in 2-component form.

    component_r = beta phi_i'' - phi_r + alpha phi_i - |phi|^2 phi_i + F
    component_i = -beta phi_r'' - phi_i - alpha phi_r + |phi|^2 phi_r
    """
    a, b, F = params.alpha, params.beta, params.forcing
    d2 = derivative_values(phi.values, phi.grid.period, 2)
    cube = cubic_term(phi.values)
    fr, fi = phi.values[:, 0], phi.values[:, 1]
    res_r = b * d2[:, 1] - fr + a * fi - cube[:, 1] + F
    res_i = -b * d2[:, 0] - fi - a * fr + cube[:, 0]
    return Field2(phi.grid, np.column_stack([res_r, res_i]))


def quadratic_coefficients(phi_values: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """The entries (3 phi_r^2 + phi_i^2, 2 phi_r phi_i, phi_r^2 + 3 phi_i^2)."""
    fr, fi = phi_values[:, 0], phi_values[:, 1]
    rr = alias_free_product(fr, fr)
    ii = alias_free_product(fi, fi)
    ri = alias_free_product(fr, fi)
    return 3 * rr + ii, 2 * ri, rr + 3 * ii


class LinearizedOperator:
    """The linearization A[phi] = -I + J L[phi] about a stationary wave.

    J = [[0, -1], [1, 0]],
    L[phi] = [[-beta d_xx - alpha + 3 phi_r^2 + phi_i^2,  2 phi_r phi_i],
              [2 phi_r phi_i,  -beta d_xx - alpha + phi_r^2 + 3 phi_i^2]].

    A[phi] is simultaneously the generator of the linearized flow and the
    Jacobian of the stationarity residual, so the profile Newton solver and
    the stability machinery share this object.

    The operator acts on fields over [0, L] for any L that is an integer
    multiple of the wave period (the coefficients extend periodically).
    """

    def __init__(self, phi_values: np.ndarray, params: LLEParams):
        self.params = params
        self.phi_values = np.asarray(phi_values, dtype=float)
        self.n_per_period = self.phi_values.shape[0]
        self._coeff_cache: dict[int, tuple[np.ndarray, np.ndarray, np.ndarray]] = {}

    @classmethod
    def for_wave(cls, wave: "WaveProfile") -> "LinearizedOperator":
        return cls(wave.field.values, wave.params)

    def _tiled_phi(self, n_periods: int) -> np.ndarray:
        return np.tile(self.phi_values, (n_periods, 1))

    def _coefficients(self, n_periods: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if n_periods not in self._coeff_cache:
            self._coeff_cache[n_periods] = quadratic_coefficients(self._tiled_phi(n_periods))
        return self._coeff_cache[n_periods]

    def apply(self, v: Field2) -> Field2:
        """Matrix-free action of A[phi] on a field over [0, N*T]."""
        L = v.grid.period
        T = self.params.period
        n_periods = int(round(L / T))
        if abs(n_periods * T - L) > 1e-12 * L:
            raise ValueError("field period is not an integer multiple of the wave period")
        a, b = self.params.alpha, self.params.beta
        c1, c2, c3 = self._coefficients(n_periods)
        d2 = derivative_values(v.values, L, 2)
        vr, vi = v.values[:, 0], v.values[:, 1]
        # L[phi] v, with the multiplications done alias-free
        Lv_r = -b * d2[:, 0] - a * vr + alias_free_product(c1, vr) + alias_free_product(c2, vi)
        Lv_i = -b * d2[:, 1] - a * vi + alias_free_product(c2, vr) + alias_free_product(c3, vi)
        out_r = -vr - Lv_i
        out_i = -vi + Lv_r
        return Field2(v.grid, np.column_stack([out_r, out_i]))

    def apply_complex(self, w: np.ndarray, L: float) -> np.ndarray:
        """Same action in complex form: -i b w'' - (1+i a) w + i(2|phi|^2 w + phi^2 conj w)."""
        n_periods = int(round(L / self.params.period))
        phi = self._tiled_phi(n_periods)
        phic = phi[:, 0] + 1j * phi[:, 1]
        a, b = self.params.alpha, self.params.beta
        w2 = derivative_values(np.column_stack([w.real, w.imag]), L, 2)
        w2c = w2[:, 0] + 1j * w2[:, 1]
        quad = alias_free_product(2 * np.abs(phic) ** 2, w) + alias_free_product(phic * phic, np.conj(w))
        return -1j * b * w2c - (1 + 1j * a) * w + 1j * quad

    def coefficient_modes(self, max_index: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Fourier coefficients of the multiplication entries up to |k| <= max_index.

        Computed on a 4x refined grid so they are exact for the quadratic
        coefficient functions. Returned as dense arrays indexed by k offset
        (k from -max_index to max_index).
        """
        n_fine = 4 * self.n_per_period
        while n_fine < 2 * max_index + 2:
            n_fine *= 2
        factor = n_fine // self.n_per_period
        fr = refine_values(self.phi_values[:, 0], factor)
        fi = refine_values(self.phi_values[:, 1], factor)
        c1 = scalar_coeffs(3 * fr**2 + fi**2)
        c2 = scalar_coeffs(2 * fr * fi)
        c3 = scalar_coeffs(fr**2 + 3 * fi**2)

        def window(c):
            idx = np.arange(-max_index, max_index + 1)
            return c[np.mod(idx, n_fine)]

        return window(c1), window(c2), window(c3)

    def dense_fourier(self, modes: np.ndarray, xi: float = 0.0) -> np.ndarray:
        """Dense Fourier-Galerkin matrix of A_xi[phi] on the given T-modes.

        `modes` is an integer array of Fourier indices on the period-T torus;
        the matrix has block structure [rr, ri; ir, ii] over these modes, with
        multiplication entries as Toeplitz blocks and -beta (d_x + i xi)^2
        diagonal. At xi = 0 this is the Galerkin matrix of A[phi].
        """
        modes = np.asarray(modes, dtype=int)
        m = modes.size
        T = self.params.period
        a, b = self.params.alpha, self.params.beta
        max_off = int(np.max(modes) - np.min(modes))
        c1w, c2w, c3w = self.coefficient_modes(max_off)
        offset_origin = max_off

        diff = modes[:, None] - modes[None, :]
        T1 = c1w[diff + offset_origin]
        T2 = c2w[diff + offset_origin]
        T3 = c3w[diff + offset_origin]

        kap = 2.0 * np.pi * modes / T
        disp = b * (kap + xi) ** 2  # -beta (d_x + i xi)^2 in Fourier
        eye = np.eye(m)

        L11 = np.diag(disp - a) + T1
        L12 = T2
        L21 = T2
        L22 = np.diag(disp - a) + T3

        A = np.zeros((2 * m, 2 * m), dtype=complex)
        A[:m, :m] = -eye - L21
        A[:m, m:] = -L22
        A[m:, :m] = L11
        A[m:, m:] = -eye + L12
        return A

    def dense_grid_matrix(self, grid: PeriodicGrid) -> np.ndarray:
        """Real dense matrix of the Galerkin action on the grid's mode set.

        Built column by column from the matrix-free apply; agrees with it to
        roundoff by construction. Size (2n, 2n) with (r, i) components stacked.
        """
        n = grid.n_points
        A = np.zeros((2 * n, 2 * n))
        basis = np.zeros((n, 2))
        for comp in range(2):
            for j in range(n):
                basis[:] = 0.0
                basis[j, comp] = 1.0
                out = self.apply(Field2(grid, basis.copy()))
                A[:n, comp * n + j] = out.values[:, 0]
                A[n:, comp * n + j] = out.values[:, 1]
        return A


def linearized_operator(wave: WaveProfile) -> LinearizedOperator:
    """A[phi] for a certified wave (apply + dense exports)."""
    return LinearizedOperator.for_wave(wave)


# ---------------------------------------------------------------------------
# constant states

def constant_state_intensities(params: LLEParams) -> np.ndarray:
    """Real roots rho of the cubic response F^2 = rho (1 + (alpha - rho)^2)."""
    a, F = params.alpha, params.forcing
    roots = np.roots([1.0, -2.0 * a, 1.0 + a * a, -F * F])
    real = roots[np.abs(roots.imag) < 1e-9].real
    return np.sort(real[real > 0])


def constant_state(params: LLEParams, rho: float) -> complex:
    """The constant solution with |phi|^2 = rho: phi = F / (1 + i(alpha - rho))."""
    return params.forcing / (1.0 + 1j * (params.alpha - rho))


def constant_state_field(params: LLEParams, rho: float, n_points: int) -> Field2:
    grid = PeriodicGrid(n_points, params.period)
    c = constant_state(params, rho)
    vals = np.tile([c.real, c.imag], (n_points, 1))
    return Field2(grid, vals)


def constant_state_symbol(c: complex, params: LLEParams, kappa: float, xi: float = 0.0) -> np.ndarray:
    """2x2 symbol of A at the constant state for total wavenumber kappa + xi."""
    a, b = params.alpha, params.beta
    m = b * (kappa + xi) ** 2 - a
    cr, ci = c.real, c.imag
    B = np.array([[3 * cr**2 + ci**2, 2 * cr * ci], [2 * cr * ci, cr**2 + 3 * ci**2]])
    J = np.array([[0.0, -1.0], [1.0, 0.0]])
    return -np.eye(2) + J @ (m * np.eye(2) + B)


def constant_state_eigenvalues(c: complex, params: LLEParams, kappa: float, xi: float = 0.0) -> np.ndarray:
    """Closed-form eigenvalues -1 +/- sqrt(-(m+rho)(m+3rho)) at a constant state."""
    a, b = params.alpha, params.beta
    rho = abs(c) ** 2
    m = b * (kappa + xi) ** 2 - a
    disc = -(m + rho) * (m + 3 * rho)
    s = np.sqrt(complex(disc))
    return np.array([-1.0 + s, -1.0 - s])


# ---------------------------------------------------------------------------
# Newton solver

def solve_profile(guess: Field2, params: LLEParams, tol: float = 1e-11,
                  max_iters: int = 50, pin_reference: Field2 | None = None,
                  log: list | None = None) -> WaveProfile:
    """Newton iteration for the profile equation with translation pinning.

    The profile equation is translation invariant, so for non-constant waves
    the Jacobian A[phi] has a kernel spanned by phi'. We solve the bordered
    system with the pinning constraint <phi_ref', phi - phi_ref> = 0, which
    restores a unique, well-conditioned solution. For (numerically) constant
    iterates the plain square system is used.

    Residual norms per iteration are appended to `log` when given, so the
    quadratic contraction is inspectable.
    """
    if tol < 1e-12:
        raise ValueError("tol below 1e-12 is not achievable in double precision")
    grid = guess.grid
    if grid.period != params.period:
        raise ValueError("guess grid period must equal params.period")
    n = grid.n_points
    phi = guess.values.copy()
    op = LinearizedOperator(phi, params)

    ref = pin_reference.values if pin_reference is not None else guess.values
    ref_prime = derivative_values(ref, params.period, 1)
    pin_active = np.linalg.norm(ref_prime) > 1e-8 * max(1.0, np.linalg.norm(ref))
    w = grid.spacing

    for it in range(max_iters):
        op = LinearizedOperator(phi, params)
        res = profile_residual(Field2(grid, phi), params)
        rnorm = l2_norm(res)
        if log is not None:
            log.append(rnorm)
        if rnorm < tol:
            return WaveProfile(params, Field2(grid, phi))
        A = op.dense_grid_matrix(grid)
        rhs = -np.concatenate([res.values[:, 0], res.values[:, 1]])
        try:
            if pin_active:
                phi_prime = derivative_values(phi, params.period, 1)
                null_col = np.concatenate([phi_prime[:, 0], phi_prime[:, 1]])
                pin_row = w * np.concatenate([ref_prime[:, 0], ref_prime[:, 1]])
                bordered = np.zeros((2 * n + 1, 2 * n + 1))
                bordered[:2 * n, :2 * n] = A
                bordered[:2 * n, -1] = null_col
                bordered[-1, :2 * n] = pin_row
                drift = w * float(np.sum(ref_prime * (phi - ref)))
                rhs_b = np.concatenate([rhs, [-drift]])
                sol = np.linalg.solve(bordered, rhs_b)
                delta = sol[:2 * n]
            else:
                delta = np.linalg.solve(A, rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobianError(
                f"linear solve failed at iteration {it} (fold point?): {exc}"
            ) from exc
        if not np.all(np.isfinite(delta)):
            raise SingularJacobianError(f"non-finite Newton step at iteration {it}")
        phi = phi + np.column_stack([delta[:n], delta[n:]])

    raise NoConvergenceError(
        f"no convergence after {max_iters} iterations (last residual {rnorm:.3e})"
    )


def seeded_pattern_guess(params: LLEParams, rho: float, n_points: int,
                         amplitude: float = 0.1) -> Field2:
    """Constant state plus a harmonic kick along the near-neutral direction.

    The kick direction is the eigenvector of the constant-state symbol at the
    fundamental wavenumber whose eigenvalue is closest to zero; this lands
    Newton on the pattern branch born at the Turing/modulational threshold.
    """
    grid = PeriodicGrid(n_points, params.period)
    c = constant_state(params, rho)
    kappa = 2.0 * np.pi / params.period
    sym = constant_state_symbol(c, params, kappa)
    lam, vecs = np.linalg.eig(sym)
    idx = int(np.argmin(np.abs(lam)))
    v = vecs[:, idx].real
    v = v / np.linalg.norm(v)
    x = grid.nodes
    vals = np.tile([c.real, c.imag], (n_points, 1))
    vals += amplitude * np.cos(kappa * x)[:, None] * v[None, :]
    return Field2(grid, vals)


def continuation_sweep(start: WaveProfile, parameter: str, step: float,
                       n_steps: int, tol: float = 1e-11) -> list[WaveProfile]:
    """Natural-parameter continuation in `parameter` ('forcing' or 'alpha').

    Each accepted solution seeds the next solve. On failure the branch is
    truncated cleanly and the error is re-raised with the step index.
    """
    if parameter not in ("forcing", "alpha"):
        raise ValueError("parameter must be 'forcing' or 'alpha'")
    branch = [start]
    current = start
    for j in range(n_steps):
        value = getattr(current.params, parameter) + step
        kwargs = {
            "alpha": current.params.alpha,
            "beta": current.params.beta,
            "forcing": current.params.forcing,
            "period": current.params.period,
        }
        kwargs[parameter] = value
        params = LLEParams(**kwargs)
        try:
            nxt = solve_profile(current.field, params, tol=tol, pin_reference=current.field)
        except (NoConvergenceError, SingularJacobianError) as exc:
            raise type(exc)(f"continuation aborted at step {j} ({parameter}={value}): {exc}") from exc
        branch.append(nxt)
        current = nxt
    return branch


# ---------------------------------------------------------------------------
# serialization

def wave_to_json(wave: WaveProfile, branch_parent: float | None = None) -> str:
    c = to_coeffs(wave.field).modes
    doc = {
        "params": {
            "alpha": wave.params.alpha,
            "beta": wave.params.beta,
            "forcing": wave.params.forcing,
            "period": wave.params.period,
        },
        "n_points": wave.grid.n_points,
        "coefficients": {
            "real_component": [[z.real, z.imag] for z in c[:, 0]],
            "imag_component": [[z.real, z.imag] for z in c[:, 1]],
        },
        "residual_norm": wave.residual_norm,
        "branch": {"parent_parameter_value": branch_parent},
    }
    return json.dumps(doc, indent=1)


def wave_from_json(text: str) -> WaveProfile:
    doc = json.loads(text)
    params = LLEParams(**doc["params"])
    n = doc["n_points"]
    cr = np.array([a + 1j * b for a, b in doc["coefficients"]["real_component"]])
    ci = np.array([a + 1j * b for a, b in doc["coefficients"]["imag_component"]])
    grid = PeriodicGrid(n, params.period)
    vals = np.column_stack(
        [np.fft.ifft(cr * n).real, np.fft.ifft(ci * n).real]
    )
    return WaveProfile(params, Field2(grid, vals))
