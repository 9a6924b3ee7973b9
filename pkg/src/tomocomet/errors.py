"""Exception types shared across the package."""


class GeometryError(ValueError):
    """Array geometry violates its construction rules."""


class IdentifiabilityError(ValueError):
    """The requested model cannot be identified from this array."""


class OrderBoundError(IdentifiabilityError):
    """Requested expansion order exceeds what the array supports."""

    def __init__(self, order, bound, message=None):
        self.order = order
        self.bound = bound
        super().__init__(message or f"order D={order} exceeds D_max={bound} for this array")


class WeightConditionError(ValueError):
    """Sample covariance too ill-conditioned to invert for the weight."""


class NormalEquationsError(ValueError):
    """Concentrated normal equations are singular at the requested order."""

    def __init__(self, order, message=None):
        self.order = order
        super().__init__(message or f"normal equations degenerate at order D={order}; "
                                    f"reduce D or improve the sample covariance")


class CovarianceError(ValueError):
    """Matrix is not a valid (Hermitian PSD) covariance."""


class SingularModelError(ValueError):
    """Model covariance numerically singular in a likelihood evaluation."""
