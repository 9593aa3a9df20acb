"""Exception hierarchy shared by every module of the package."""


class IobsError(Exception):
    """Base class for all package errors."""


class ShapeError(IobsError, ValueError):
    """Matrix or vector dimensions do not agree."""


class EigenSolverError(IobsError):
    pass


class SvdError(IobsError):
    pass


class NearSingularSylvester(IobsError):
    """The spectra of the two coefficient matrices (nearly) overlap."""


class InvalidInterval(IobsError, ValueError):
    """Lower bound exceeds upper bound somewhere."""


class DesignError(IobsError):
    """An observer design precondition failed."""

    code = "DesignError"


class NotObservable(DesignError):
    code = "NotObservable"


class BadTargetStructure(DesignError):
    code = "BadTargetStructure"


class NotControllable(DesignError):
    code = "NotControllable"


class SpectraOverlap(DesignError):
    code = "SpectraOverlap"


class TNotInvertible(DesignError):
    code = "TNotInvertible"


class TargetExhausted(DesignError):
    code = "TargetExhausted"


class SingularFk(IobsError):
    """A discrete-time transition matrix is not invertible."""

    def __init__(self, k, message=None):
        self.k = k
        super().__init__(message or f"F_k is singular at k={k}")


class NonFiniteState(IobsError):
    def __init__(self, time, message=None):
        self.time = time
        super().__init__(message or f"non-finite simulation state at t={time!r}")


class ConfigError(IobsError):
    """Invalid scenario configuration; ``path`` locates the offending field."""

    def __init__(self, path, message):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}" if path else message)
