"""Numerical laboratory for subharmonic stability of Lugiato-Lefever periodic waves.

Layout:

- spectral:   periodic grids, Fourier differentiation, norms, interpolation
- profile:    stationary waves (Newton + continuation) and the linearization
- bloch:      Bloch operators, spectra, diffusive-stability certification
- semigroup:  the linearized solution operator and its three-part decomposition
- evolve:     ETDRK4 time integration of the full and linearized equations
- modulation: spatio-temporal phase extraction (the modulation integral system)
- damping:    energy functional and damping-estimate monitoring
- experiments: decay studies, crossover runs, exponent regression, artifacts
"""

__version__ = "0.1.0"
