"""Exception types shared across the package."""


class ConsortiumError(Exception):
    """Base class for all package errors."""


class DomainError(ConsortiumError, ValueError):
    """An argument lies outside the domain of a rate law or model function.

    ``bound`` names the violated limit (e.g. ``"phi_max"``) when one applies.
    """

    def __init__(self, message, bound=None):
        super().__init__(message)
        self.bound = bound


class MembershipError(ConsortiumError, ValueError):
    """A control is outside the admissible set of the requested criterion."""


class ExistenceError(ConsortiumError):
    """The requested equilibrium does not exist for the given control."""


class InfeasibleError(ConsortiumError):
    """No admissible point exists for the requested problem."""


class PreconditionError(ConsortiumError, ValueError):
    """A stated precondition does not hold (e.g. the input is not an equilibrium)."""


class ConvergenceError(ConsortiumError):
    """An iterative method hit its iteration cap. ``best`` holds the last best iterate."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
