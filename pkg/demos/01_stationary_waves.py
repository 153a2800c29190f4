"""Find stationary periodic waves of the driven damped cavity equation.

Walks the constant-state response curve, kicks Newton onto the pattern
branch born at the modulational threshold, and continues the branch in the
pump strength.
"""

import numpy as np

from llestab.profile import (
    LLEParams,
    constant_state_intensities,
    continuation_sweep,
    seeded_pattern_guess,
    solve_profile,
    wave_to_json,
)

params = LLEParams(alpha=1.0, beta=-1.0, forcing=1.1, period=2 * np.pi)
print(f"cavity parameters: alpha={params.alpha}, beta={params.beta}, "
      f"F={params.forcing}, T={params.period:.4f}")

rhos = constant_state_intensities(params)
print(f"\nconstant-state intensities rho solving F^2 = rho(1+(alpha-rho)^2): {rhos}")
print("(rho > 1 puts the fundamental mode k=1 inside the unstable band)")

rho = rhos[-1]
log = []
wave = solve_profile(seeded_pattern_guess(params, rho, 64, amplitude=0.6),
                     params, tol=1e-11, log=log)
print(f"\nNewton residual history: {['%.1e' % r for r in log]}")
print(f"certified wave: residual = {wave.residual_norm:.2e}, "
      f"first harmonic = {wave.first_harmonic_amplitude():.4f}")

branch = continuation_sweep(wave, "forcing", 0.01, 5)
print("\ncontinuation in F:")
for w in branch:
    print(f"  F = {w.params.forcing:.3f}: |first harmonic| = "
          f"{w.first_harmonic_amplitude():.4f}, residual = {w.residual_norm:.1e}")

with open("wave.json", "w") as f:
    f.write(wave_to_json(wave))
print("\nwave saved to wave.json")
