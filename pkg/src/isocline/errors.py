"""Exception hierarchy shared by all subpackages."""


class IsoclineError(Exception):
    """Base class for numerical failures raised by this package."""


class SingularMetricError(IsoclineError):
    def __init__(self, sigma_min):
        self.sigma_min = sigma_min
        super().__init__(f"metric is singular (smallest singular value {sigma_min:.3e})")


class AtEquilibriumError(IsoclineError):
    """The field vanishes (to tolerance) so it cannot be normalized."""

    def __init__(self, norm):
        self.norm = norm
        super().__init__(f"field norm {norm:.3e} is zero to tolerance")


class AmbiguousKernelError(IsoclineError):
    """The covariant-derivative matrix has more than a one-dimensional kernel."""

    def __init__(self, singular_values, trajectory=None):
        self.singular_values = singular_values
        self.trajectory = trajectory
        super().__init__(f"kernel is not one-dimensional; singular values {list(singular_values)}")


class DegenerateKernelError(IsoclineError):
    pass


class DomainError(IsoclineError, ValueError):
    """A point lies outside the domain of a chart or formula."""


class SamplerStuckError(IsoclineError):
    pass


class InstabilityError(IsoclineError):
    pass


class ConnectivityError(IsoclineError):
    pass


class ConditioningError(IsoclineError):
    pass


class DegenerateCloudError(IsoclineError, ValueError):
    pass


class CapabilityError(IsoclineError, TypeError):
    pass


class PreconditionError(IsoclineError, ValueError):
    pass
