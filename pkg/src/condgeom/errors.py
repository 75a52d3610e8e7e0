"""Exception types shared across the package."""


class ConditionGeometryError(Exception):
    """Base class for all errors raised by condgeom."""


class DimensionError(ConditionGeometryError, ValueError):
    pass


class SingularGapError(ConditionGeometryError):
    """The smallest singular value is (numerically) not simple."""


class OrthogonalityError(ConditionGeometryError, ValueError):
    pass


class DomainError(ConditionGeometryError, ValueError):
    """A point lies outside the domain where the conformal factor is defined."""


class StepFailure(ConditionGeometryError):
    pass


class ConstraintDrift(ConditionGeometryError):
    pass


class RankError(ConditionGeometryError):
    pass


class ConvergenceError(ConditionGeometryError):
    def __init__(self, message, best_residual=float("nan")):
        super().__init__(message)
        self.best_residual = best_residual


class NotCritical(ConditionGeometryError):
    pass


class MultiplicityError(DomainError):
    """The nearest point is not unique (the point lies outside the set U)."""


class SingularJacobianError(DomainError):
    """The linearised nearest-point system is too ill-conditioned (focal point)."""


class NoConvergence(ConditionGeometryError):
    pass


class ConfigError(ConditionGeometryError, ValueError):
    pass
