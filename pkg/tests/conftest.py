"""Shared fixtures: one certified wave and its spectral data per session."""

import numpy as np
import pytest

from llestab.bloch import certify_stability, critical_curve
from llestab.experiments import canonical_params
from llestab.profile import (
    constant_state_intensities,
    seeded_pattern_guess,
    solve_profile,
)
from llestab.semigroup import build_kernel


@pytest.fixture(scope="session")
def wave():
    params = canonical_params()
    rho = constant_state_intensities(params)[-1]
    guess = seeded_pattern_guess(params, rho, 64, amplitude=0.6)
    w = solve_profile(guess, params, tol=1e-11)
    assert w.first_harmonic_amplitude() > 1e-3, "landed on a constant state"
    return w


@pytest.fixture(scope="session")
def report(wave):
    T = wave.params.period
    xi_grid = np.linspace(-np.pi / T, np.pi / T, 65)[:-1]
    rep = certify_stability(wave, xi_grid, M=32, N_list=(1, 2, 4, 8, 16),
                            check_resolution=False)
    assert rep.passed
    return rep


@pytest.fixture(scope="session")
def curve(wave):
    T = wave.params.period
    xs = np.unique(np.concatenate([np.linspace(-1, 1, 81) * np.pi / T * 0.999, [0.0]]))
    return critical_curve(wave, xs, M=32)


@pytest.fixture(scope="session")
def kernels(wave, curve):
    cache = {}

    def get(N):
        if N not in cache:
            cache[N] = build_kernel(wave, N, curve)
        return cache[N]

    return get


def random_smooth(grid, N, rng, k0=8.0, norm="l1l2"):
    """Unit-size smooth random field (shared test helper)."""
    from llestab.spectral import Field2, l1_norm, l2_norm, sobolev_norm

    n = grid.n_points
    m = np.fft.fftfreq(n, 1.0 / n).astype(int)
    amp = np.exp(-0.5 * (m / (N * k0)) ** 2)
    c = (rng.standard_normal((n, 2)) + 1j * rng.standard_normal((n, 2))) * amp[:, None]
    c[0] = c[0].real
    vals = np.fft.ifft(c * n, axis=0).real
    f = Field2(grid, vals)
    size = max(l1_norm(f), l2_norm(f)) if norm == "l1l2" else max(l1_norm(f), sobolev_norm(f, 2))
    return Field2(grid, vals / size)
