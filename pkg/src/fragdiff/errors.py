"""Exception types shared across the package."""


class FragdiffError(Exception):
    """Base class for all package-specific errors."""


class DomainError(FragdiffError):
    """An argument lies outside the mathematical domain of an operation."""


class ContractViolationError(FragdiffError):
    """A structural invariant that the code promises to maintain was breached."""


class DivergentSeriesError(FragdiffError):
    """A series required to converge provably diverges for the given parameters."""


class ConfigError(FragdiffError):
    """Configuration input is malformed, incomplete, or contains unknown keys."""


class CflViolationError(FragdiffError):
    """Requested explicit time step exceeds the stability limit.

    Attributes
    ----------
    dt_required : float
        Largest admissible step for the current grid and diffusion coefficients.
    """

    def __init__(self, dt, dt_required):
        super().__init__(
            f"explicit step dt={dt:g} exceeds stability limit {dt_required:g}; "
            f"reduce dt or switch to the implicit-diffusion scheme"
        )
        self.dt = dt
        self.dt_required = dt_required


class NumericalAbortError(FragdiffError):
    """The time integration produced non-finite values or ran out of step-size budget."""

    def __init__(self, message, t=None, step_index=None):
        super().__init__(message)
        self.t = t
        self.step_index = step_index


class LinearSolveError(FragdiffError):
    """An implicit linear solve failed to reach the required residual."""
