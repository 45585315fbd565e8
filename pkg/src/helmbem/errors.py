"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument is outside the mathematical domain of the operation."""


class CapacityError(RuntimeError):
    """A documented size cap (order, dof, ...) would be exceeded."""


class SingularityError(ValueError):
    """Evaluation requested exactly at (or too close to) a kernel singularity."""


class PrecisionError(RuntimeError):
    """A quadrature/truncation did not reach its accuracy target."""


class AssemblyError(RuntimeError):
    """Quadrature failure while assembling a specific matrix entry."""


class NumericalError(RuntimeError):
    """Linear-algebra breakdown (e.g. Arnoldi breakdown with residual left)."""


class UnsupportedError(RuntimeError):
    """Operation not defined for this input (e.g. open arcs)."""
