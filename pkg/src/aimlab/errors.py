"""Exception types raised across the package."""


class AimlabError(Exception):
    """Base class for all package errors."""


class NonFiniteValue(AimlabError, FloatingPointError):
    pass


class MissingProjector(AimlabError):
    """The problem does not expose a projection onto its solution set."""


class RankDeficient(AimlabError, ValueError):
    pass


class NoValidProbe(AimlabError):
    """Too few probes survived filtering for a meaningful extremal ratio."""

    def __init__(self, msg, n_valid=0):
        super().__init__(msg)
        self.n_valid = n_valid


class NoSolutionInRegion(AimlabError):
    pass


class DegenerateGradient(AimlabError, ZeroDivisionError):
    pass


class DegeneratePoint(AimlabError, ValueError):
    """Point lies (numerically) on the solution set where a ratio is undefined."""


class RadiusTooLarge(AimlabError, ValueError):
    pass


class JacobianTooRough(AimlabError, ValueError):
    pass


class InvalidStepsize(AimlabError, ValueError):
    pass


class InsufficientData(AimlabError, ValueError):
    pass


class MonitorMissing(AimlabError, KeyError):
    pass


class NotConverged(AimlabError):
    """Iterative solver hit its budget; ``estimate`` holds the last iterate."""

    def __init__(self, msg, estimate=None):
        super().__init__(msg)
        self.estimate = estimate


class PreconditionViolated(AimlabError, ValueError):
    pass


class AllRejected(AimlabError):
    """Rejection sampling left no admissible candidate."""

    def __init__(self, msg, result=None):
        super().__init__(msg)
        self.result = result


class ConfigError(AimlabError, ValueError):
    pass
