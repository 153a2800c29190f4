"""Fourier pseudospectral foundation on periodic domains.

Everything downstream works with equispaced periodic grids on [0, L) and
2-component real fields (the real/imaginary parts of a complex envelope).
Differentiation, interpolation and quadrature are spectral: derivatives are
exact for resolved trigonometric polynomials and the trapezoid rule is exact
for band-limited integrands.

Products of fields are formed on a zero-padded grid and truncated back, so
quadratic and cubic terms are alias-free (equivalent to a Fourier-Galerkin
product).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np


class GridMismatchError(ValueError):
    """Operands live on different grids."""


@dataclass(frozen=True)
class PeriodicGrid:
    """Equispaced periodic grid x_j = j * period / n_points on [0, period).

    n_points must be even so Fourier modes pair symmetrically around zero
    (the lone Nyquist mode is handled explicitly where it matters).
    """

    n_points: int
    period: float

    def __post_init__(self):
        if self.n_points <= 0 or self.n_points % 2 != 0:
            raise ValueError(f"n_points must be a positive even integer, got {self.n_points}")
        if not self.period > 0:
            raise ValueError(f"period must be positive, got {self.period}")

    @property
    def nodes(self) -> np.ndarray:
        return np.arange(self.n_points) * (self.period / self.n_points)

    @property
    def spacing(self) -> float:
        return self.period / self.n_points

    @property
    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers 2*pi*k/period in FFT layout."""
        return 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=1.0 / self.n_points) / self.period

    @property
    def mode_indices(self) -> np.ndarray:
        """Integer mode indices k in FFT layout, |k| <= n_points/2."""
        return np.fft.fftfreq(self.n_points, d=1.0 / self.n_points).astype(int)

    def refine(self, factor: int) -> "PeriodicGrid":
        return PeriodicGrid(self.n_points * factor, self.period)


@dataclass
class Field2:
    """2-component real field (f_r, f_i) sampled on a periodic grid."""

    grid: PeriodicGrid
    values: np.ndarray  # shape (n_points, 2)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_points, 2):
            raise ValueError(
                f"values shape {self.values.shape} does not match grid "
                f"({self.grid.n_points}, 2)"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    @classmethod
    def from_complex(cls, grid: PeriodicGrid, z: np.ndarray) -> "Field2":
        z = np.asarray(z, dtype=complex)
        return cls(grid, np.column_stack([z.real, z.imag]))

    @classmethod
    def zeros(cls, grid: PeriodicGrid) -> "Field2":
        return cls(grid, np.zeros((grid.n_points, 2)))

    def as_complex(self) -> np.ndarray:
        return self.values[:, 0] + 1j * self.values[:, 1]

    def copy(self) -> "Field2":
        return Field2(self.grid, self.values.copy())

    def __add__(self, other: "Field2") -> "Field2":
        _check_same_grid(self, other)
        return Field2(self.grid, self.values + other.values)

    def __sub__(self, other: "Field2") -> "Field2":
        _check_same_grid(self, other)
        return Field2(self.grid, self.values - other.values)

    def __mul__(self, a: float) -> "Field2":
        return Field2(self.grid, self.values * float(a))

    __rmul__ = __mul__


@dataclass
class ScalarField:
    """Real scalar field on a periodic grid (phase modulations live here).

    Kept distinct from Field2 so a phase cannot silently enter 2-component
    arithmetic.
    """

    grid: PeriodicGrid
    values: np.ndarray  # shape (n_points,)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_points,):
            raise ValueError("scalar field shape does not match grid")

    @classmethod
    def zeros(cls, grid: PeriodicGrid) -> "ScalarField":
        return cls(grid, np.zeros(grid.n_points))

    def copy(self) -> "ScalarField":
        return ScalarField(self.grid, self.values.copy())

    def as_field2(self) -> Field2:
        """Broadcast into the first component of a Field2 (second = 0)."""
        return Field2(self.grid, np.column_stack([self.values, np.zeros_like(self.values)]))


@dataclass
class SpectralCoeffs:
    """Complex Fourier coefficients per component, FFT layout.

    Normalized so that f(x) = sum_k modes[k] * exp(i * 2*pi*k*x / period).
    """

    grid: PeriodicGrid
    modes: np.ndarray  # shape (n_points, 2), complex

    def __post_init__(self):
        self.modes = np.asarray(self.modes, dtype=complex)
        if self.modes.shape != (self.grid.n_points, 2):
            raise ValueError("modes shape does not match grid")


def _check_same_grid(f, g):
    if f.grid != g.grid:
        raise GridMismatchError(f"grids differ: {f.grid} vs {g.grid}")


# ---------------------------------------------------------------------------
# transforms

def to_coeffs(f: Field2) -> SpectralCoeffs:
    return SpectralCoeffs(f.grid, np.fft.fft(f.values, axis=0) / f.grid.n_points)


def to_field(c: SpectralCoeffs) -> Field2:
    vals = np.fft.ifft(c.modes * c.grid.n_points, axis=0)
    return Field2(c.grid, vals.real)


def scalar_coeffs(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values)
    return np.fft.fft(values) / values.shape[0]


def scalar_from_coeffs(coeffs: np.ndarray) -> np.ndarray:
    return np.fft.ifft(coeffs * coeffs.shape[0]).real


# ---------------------------------------------------------------------------
# differentiation

MAX_DERIVATIVE_ORDER = 4


def _derivative_symbol(grid: PeriodicGrid, order: int) -> np.ndarray:
    """(i*k)^order in FFT layout; Nyquist zeroed for odd orders.

    Zeroing the Nyquist mode for odd derivatives keeps the derivative of a
    real field real (see Johnson, "Notes on FFT-based differentiation").
    """
    kappa = grid.wavenumbers
    sym = (1j * kappa) ** order
    if order % 2 == 1:
        sym[grid.n_points // 2] = 0.0
    return sym


def derivative_values(values: np.ndarray, period: float, order: int) -> np.ndarray:
    """Spectral derivative of real sampled values (any 1D/2D column layout)."""
    if order == 0:
        return np.asarray(values, dtype=float).copy()
    if order < 0 or order > MAX_DERIVATIVE_ORDER:
        raise ValueError(f"derivative order must be in 0..{MAX_DERIVATIVE_ORDER}, got {order}")
    values = np.asarray(values, dtype=float)
    grid = PeriodicGrid(values.shape[0], period)
    sym = _derivative_symbol(grid, order)
    if values.ndim == 2:
        sym = sym[:, None]
    return np.fft.ifft(sym * np.fft.fft(values, axis=0), axis=0).real


def spectral_derivative(f: Field2, order: int) -> Field2:
    """order-th derivative via multiplication by (i*2*pi*k/period)^order."""
    return Field2(f.grid, derivative_values(f.values, f.grid.period, order))


def scalar_derivative(g: ScalarField, order: int) -> ScalarField:
    return ScalarField(g.grid, derivative_values(g.values, g.grid.period, order))


# ---------------------------------------------------------------------------
# quadrature, norms, pairings

def quadrature_weight(grid: PeriodicGrid) -> float:
    """Trapezoid weight on an equispaced periodic grid (= spacing)."""
    return grid.spacing


def l2_norm(f: Field2) -> float:
    return float(np.sqrt(quadrature_weight(f.grid) * np.sum(f.values**2)))


def l1_norm(f: Field2) -> float:
    """Integral of |f| with |f| the pointwise modulus of the complex value."""
    return float(quadrature_weight(f.grid) * np.sum(np.hypot(f.values[:, 0], f.values[:, 1])))


def sup_norm(f: Field2, refine: int = 2) -> float:
    """Grid sup of |f|, sampled on a refine-x finer grid for safety."""
    z = f.as_complex()
    if refine > 1:
        z = refine_values(z, refine)
    return float(np.max(np.abs(z)))


def sobolev_norm(f: Field2, m: int) -> float:
    """H^m norm: (||f||^2 + sum_{k<=m} ||f^(k)||^2)^(1/2), spectral derivatives."""
    if m < 0 or m > MAX_DERIVATIVE_ORDER:
        raise ValueError(f"Sobolev order must be in 0..{MAX_DERIVATIVE_ORDER}, got {m}")
    total = l2_norm(f) ** 2
    for k in range(1, m + 1):
        total += l2_norm(spectral_derivative(f, k)) ** 2
    return float(np.sqrt(total))


def scalar_l2_norm(g: ScalarField) -> float:
    return float(np.sqrt(quadrature_weight(g.grid) * np.sum(g.values**2)))


def scalar_sobolev_norm(g: ScalarField, m: int) -> float:
    if m < 0 or m > MAX_DERIVATIVE_ORDER:
        raise ValueError(f"Sobolev order must be in 0..{MAX_DERIVATIVE_ORDER}, got {m}")
    total = scalar_l2_norm(g) ** 2
    for k in range(1, m + 1):
        total += scalar_l2_norm(scalar_derivative(g, k)) ** 2
    return float(np.sqrt(total))


def scalar_sup_norm(g: ScalarField, refine: int = 2) -> float:
    v = g.values if refine <= 1 else refine_values(g.values, refine)
    return float(np.max(np.abs(v)))


def inner_product(f: Field2, g: Field2) -> float:
    """Real pairing: integral of f_r*g_r + f_i*g_i over one period."""
    _check_same_grid(f, g)
    return float(quadrature_weight(f.grid) * np.sum(f.values * g.values))


def l1_l2_norm(f: Field2) -> float:
    """Norm of the intersection L^1 cap L^2: max of the two norms."""
    return max(l1_norm(f), l2_norm(f))


def l1_h2_norm(f: Field2) -> float:
    """Norm of L^1 cap H^2: max of the L^1 and H^2 norms."""
    return max(l1_norm(f), sobolev_norm(f, 2))


# ---------------------------------------------------------------------------
# interpolation and padding

def refine_values(values: np.ndarray, factor: int) -> np.ndarray:
    """Evaluate the trigonometric interpolant on a factor-x finer grid.

    Zero-padding in Fourier space; exact for the stored band-limited data.
    Accepts real or complex 1D arrays and 2D column stacks.
    """
    values = np.asarray(values)
    n = values.shape[0]
    if factor == 1:
        return values.copy()
    c = np.fft.fft(values, axis=0)
    m = n * factor
    shape = (m,) + values.shape[1:]
    cf = np.zeros(shape, dtype=complex)
    half = n // 2
    cf[:half] = c[:half]
    cf[m - half:] = c[half:]
    # split the Nyquist bin symmetrically so the interpolant stays real
    cf[half] = 0.5 * c[half]
    cf[m - half] = 0.5 * c[half]
    out = np.fft.ifft(cf, axis=0) * factor
    return out.real if np.isrealobj(values) else out


def truncate_values(values_fine: np.ndarray, factor: int) -> np.ndarray:
    """Project fine-grid samples back onto the coarse grid's modes."""
    values_fine = np.asarray(values_fine)
    m = values_fine.shape[0]
    n = m // factor
    c = np.fft.fft(values_fine, axis=0) / factor
    shape = (n,) + values_fine.shape[1:]
    cc = np.zeros(shape, dtype=complex)
    half = n // 2
    cc[:half] = c[:half]
    cc[half + 1:] = c[m - half + 1:]
    cc[half] = c[half] + c[m - half]  # fold the +/- Nyquist pair into one bin
    out = np.fft.ifft(cc, axis=0)
    return out.real if np.isrealobj(values_fine) else out


def alias_free_product(*factors: np.ndarray, pad: int = 2) -> np.ndarray:
    """Pointwise product of sampled factors, alias-free on the original grid.

    Each factor is refined by zero padding, multiplied pointwise, and the
    result is truncated back: the Galerkin product for up to `pad + 1` factors
    of full bandwidth.
    """
    fine = refine_values(factors[0], pad)
    for fac in factors[1:]:
        fine = fine * refine_values(fac, pad)
    return truncate_values(fine, pad)


def evaluate_trig(values: np.ndarray, period: float, points: np.ndarray) -> np.ndarray:
    """Evaluate the trigonometric interpolant at arbitrary points.

    The Nyquist mode is evaluated as cos(kappa_N x) (symmetric split), so real
    data gives real values. Exact for resolved trigonometric polynomials;
    points are interpreted modulo the period.
    """
    values = np.asarray(values)
    n = values.shape[0]
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    c = np.fft.fft(values, axis=0) / n
    kappa = 2.0 * np.pi * np.fft.fftfreq(n, d=1.0 / n) / period
    ny = n // 2
    basis = np.exp(1j * np.outer(pts, kappa))
    basis[:, ny] = np.cos(np.abs(kappa[ny]) * pts)
    out = basis @ c
    if np.isrealobj(values):
        out = out.real
    return out if np.asarray(points).ndim else out[0]


def trig_interpolate(f: Field2, points: np.ndarray) -> np.ndarray:
    """Values of f's trigonometric interpolant at the query points, shape (q, 2)."""
    return np.column_stack(
        [evaluate_trig(f.values[:, 0], f.grid.period, points),
         evaluate_trig(f.values[:, 1], f.grid.period, points)]
    )


def shifted_values(values: np.ndarray, period: float, shift: np.ndarray,
                   taylor_tol: float = 1e-2, max_terms: int = 10) -> np.ndarray:
    """Samples of f(x_j - shift_j) on the grid, for a smooth shift field.

    The mean shift is applied exactly as a Fourier phase twist; the remaining
    zero-mean part is handled by a Taylor expansion in the shift, which is
    accurate when the shift variation is small compared to the grid spacing.
    Falls back to direct interpolation otherwise.
    """
    values = np.asarray(values)
    n = values.shape[0]
    shift = np.broadcast_to(np.asarray(shift, dtype=float), (n,))
    mean = float(np.mean(shift))
    wobble = shift - mean

    c = np.fft.fft(values) / n
    kappa = 2.0 * np.pi * np.fft.fftfreq(n, d=1.0 / n) / period
    ny = n // 2
    phase = np.exp(-1j * kappa * mean)
    phase[ny] = np.cos(kappa[ny] * mean)  # Nyquist translates via its cosine form
    base = np.fft.ifft(phase * c) * n

    wmax = float(np.max(np.abs(wobble)))
    if wmax == 0.0:
        out = base
    elif wmax > taylor_tol:
        # large varying shift: evaluate the interpolant directly
        grid_x = np.arange(n) * (period / n)
        out = evaluate_trig(values, period, grid_x - shift)
        return out
    else:
        # Taylor series sum_p (-w)^p f^(p)(x) / p!, derivatives taken spectrally
        out = base.copy()
        deriv_coeffs = phase * c
        fact = 1.0
        for p in range(1, max_terms + 1):
            s = 1j * kappa
            if p % 2 == 1:
                s = s.copy()
                s[ny] = 0.0
            deriv_coeffs = s * deriv_coeffs
            deriv = np.fft.ifft(deriv_coeffs) * n
            fact *= p
            out = out + ((-wobble) ** p / fact) * deriv
    if np.isrealobj(values):
        return out.real
    return out


# ---------------------------------------------------------------------------
# serialization

def write_field_csv(f: Field2, path_or_buf) -> None:
    """CSV snapshot: header records period and n_points; columns x, f_r, f_i."""
    own = isinstance(path_or_buf, (str, bytes))
    handle = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        w = csv.writer(handle)
        w.writerow([f"# period={float(f.grid.period)!r} n_points={f.grid.n_points}"])
        w.writerow(["x", "f_r", "f_i"])
        for x, (fr, fi) in zip(f.grid.nodes, f.values):
            w.writerow([repr(float(x)), repr(float(fr)), repr(float(fi))])
    finally:
        if own:
            handle.close()


def read_field_csv(path_or_buf) -> Field2:
    own = isinstance(path_or_buf, (str, bytes))
    handle = open(path_or_buf, "r", newline="") if own else path_or_buf
    try:
        rows = list(csv.reader(handle))
    finally:
        if own:
            handle.close()
    header = rows[0][0]
    meta = dict(kv.split("=") for kv in header.lstrip("# ").split())
    grid = PeriodicGrid(int(meta["n_points"]), float(meta["period"]))
    data = np.array([[float(r[1]), float(r[2])] for r in rows[2:]])
    return Field2(grid, data)
