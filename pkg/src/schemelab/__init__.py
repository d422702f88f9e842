"""schemelab: spectral workbench for approximation schemes of Burgers-like SPDEs.

The package is organised around one question: given a cut-off scheme
(f, mu, h) that replaces the Laplacian, the spatial derivative and the
noise by Fourier multipliers, what equation do the approximations
actually converge to, and at what rate?  The modules are

schemes     cut-off schemes, their multipliers, and assumption audits
spectral    periodic vector fields, transforms, semigroups, norms
correction  the scheme-dependent correction constant and corrected drift
roughpath   Chen composition, Gubinelli integrals, scaled discrete sums
lift        Gaussian reference field and its iterated-integral lift
solver      exponential-Euler time stepping of the approximating SPDE
experiments Monte-Carlo experiments, rate fits, run records
cli         command-line harness
"""

from schemelab.schemes import (
    AtomicSignedMeasure,
    CutoffScheme,
    SchemeReport,
    derivative_multiplier,
    laplacian_multiplier,
    noise_multiplier,
    validate_scheme,
)

__all__ = [
    "AtomicSignedMeasure",
    "CutoffScheme",
    "SchemeReport",
    "laplacian_multiplier",
    "derivative_multiplier",
    "noise_multiplier",
    "validate_scheme",
]

__version__ = "0.1.0"
