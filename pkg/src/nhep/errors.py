"""Exception types raised across the package.

Domain errors (a request outside the model's admissible region) derive from
:class:`DomainError`; numerical failures derive from :class:`NumericalError`.
The CLI maps the two families to exit codes 3 and 4.
"""


class NHEPError(Exception):
    """Base class for all package errors."""


class DomainError(NHEPError, ValueError):
    """Inputs are valid numbers but outside the admissible region."""


class NumericalError(NHEPError, ArithmeticError):
    """A computation failed to converge or lost precision."""


class MetricNotPositive(DomainError):
    """M(t) - I acquired a negative eigenvalue: the dilation window is exceeded.

    ``t_fail`` holds the first inadmissible time (seconds) when known.
    """

    def __init__(self, msg, t_fail=None):
        super().__init__(msg)
        self.t_fail = t_fail


class OnLocus(DomainError):
    """A point lies on the exceptional line, so sgn Re r1 is undefined."""


class InsufficientSamples(DomainError):
    pass


class OffLocus(DomainError):
    """Dispersion anchor does not satisfy gamma^2 = 1 + h^2."""


class NoSolution(DomainError):
    pass


class SingularSystem(NumericalError):
    pass


class NoConvergence(NumericalError):
    pass


class SingularShift(NumericalError):
    pass


class NormOverflow(NumericalError):
    pass


class IllConditioned(NumericalError):
    pass


class StepTooCoarse(NumericalError):
    pass


class WindowTooWide(NumericalError):
    pass


class DegenerateFit(NumericalError):
    pass


class MatchingAmbiguous(NumericalError):
    pass
