"""2-D Helmholtz exterior-Dirichlet boundary-element laboratory.

Assembles the second-kind combined-field integral operators on parametrized
curves, solves sound-soft scattering with Galerkin h-BEM and full GMRES, and
measures wavenumber scalings: operator norms, coercivity/numerical-range
constants, quasi-optimality, iteration growth, and the coupling-sign effect.
"""

__version__ = "0.1.0"

from . import analytic, assembly, geometry, krylov, probes, quadrature, specfun, studies

__all__ = ["analytic", "assembly", "geometry", "krylov", "probes",
           "quadrature", "specfun", "studies", "__version__"]
