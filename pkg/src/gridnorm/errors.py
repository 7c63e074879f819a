"""Exception types shared across the package."""


class GridNormError(Exception):
    """Base class for all gridnorm errors."""


class ValidationError(GridNormError):
    """Input data violates a structural invariant (schema, shape, sign)."""


class DisconnectedNetworkError(GridNormError):
    """The network graph has more than one connected component."""


class NotHurwitzError(GridNormError):
    """A matrix required to be Hurwitz has spectral abscissa >= tolerance."""


class NumericalFailureError(GridNormError):
    """A numerical routine failed or produced an unacceptable residual."""


class UnstableStepError(GridNormError):
    """The explicit integration step is unstable at the requested dt."""


class InfeasibleError(GridNormError):
    """An optimization problem has an empty feasible set."""


class TooLargeError(GridNormError):
    """An exhaustive search would exceed the evaluation budget."""


class InsufficientSamplesError(GridNormError):
    """Not enough trials to form the requested statistic."""


class NonZeroFirstEigenvalueError(GridNormError):
    """A spectrum expected to start with a zero eigenvalue does not."""
