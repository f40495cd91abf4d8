from typing import List, Optional


class NLSToolsError(Exception):
    """
    Base exception for every error raised by nlstools
    """

    def __init__(self, msg: str = ""):
        super(NLSToolsError, self).__init__(msg)
        self.msg = msg

    def __str__(self):
        if self.msg:
            return f"{type(self).__name__}, {self.msg}"
        else:
            return f"Exception {type(self).__name__} occurred"


class GridError(NLSToolsError):
    """
    Raised for invalid grid arguments or when two grid functions live on different grids
    """


class KernelError(NLSToolsError):
    """
    Raised when a kernel is used outside of its domain (e.g. pointwise delta evaluation)
    """


class RegimeError(NLSToolsError):
    """
    Raised for a degenerate linear basis or an overlap regime that cannot be handled
    """


class EigenSolverError(NLSToolsError):
    def __init__(self, msg: str, residual: Optional[float] = None):
        super(EigenSolverError, self).__init__(msg)
        self.residual = residual


class SingularityError(NLSToolsError):
    """
    Raised when the reduced system reaches |z| = 1 where the phase equation is singular
    """

    def __init__(self, msg: str, z: Optional[float] = None, theta: Optional[float] = None):
        super(SingularityError, self).__init__(msg)
        self.z = z
        self.theta = theta


class FixedPointError(NLSToolsError):
    def __init__(self, msg: str, residual: Optional[float] = None):
        super(FixedPointError, self).__init__(msg)
        self.residual = residual


class ConvergenceError(NLSToolsError):
    """
    Raised when the Newton iteration does not converge

    :param history: Max-norm residual after each iteration
    """

    def __init__(self, msg: str, history: Optional[List[float]] = None):
        super(ConvergenceError, self).__init__(msg)
        self.history = history or []


class TrivialSolutionError(ConvergenceError):
    """
    Raised when the Newton iteration collapses onto the trivial solution psi = 0
    """


class ContinuationError(NLSToolsError):
    """
    Raised when a branch trace is aborted; the states traced so far are kept in `branch`
    """

    def __init__(self, msg: str, branch=None):
        super(ContinuationError, self).__init__(msg)
        self.branch = branch


class NormDriftError(NLSToolsError):
    def __init__(self, msg: str, time: Optional[float] = None, drift: Optional[float] = None):
        super(NormDriftError, self).__init__(msg)
        self.time = time
        self.drift = drift


class NumericalBlowupError(NLSToolsError):
    def __init__(self, msg: str, time: Optional[float] = None):
        super(NumericalBlowupError, self).__init__(msg)
        self.time = time


class ConfigError(NLSToolsError):
    """
    Raised when a run configuration cannot be loaded or validated

    :param errors: One entry per violated field, {"field": ..., "message": ...}
    """

    def __init__(self, msg: str, errors: Optional[List[dict]] = None, path: Optional[str] = None):
        super(ConfigError, self).__init__(msg)
        self.errors = errors or []
        self.path = path

    def to_dict(self) -> dict:
        return {"error": type(self).__name__, "message": self.msg, "path": self.path, "fields": self.errors}
