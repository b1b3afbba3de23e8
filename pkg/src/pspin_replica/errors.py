"""Exception hierarchy. ``exit_code`` is what the CLI returns for each kind."""


class ReplicaError(Exception):
    exit_code = 1


class ConfigError(ReplicaError, ValueError):
    exit_code = 2


class BudgetExceeded(ReplicaError):
    """Raised before any partial sum is formed when an enumeration is too large."""

    exit_code = 3


class MarginViolation(ReplicaError):
    exit_code = 4


class NotPSD(ReplicaError, ValueError):
    exit_code = 2


class ZeroVector(ReplicaError, ValueError):
    exit_code = 2


class GluingRequired(ReplicaError, ValueError):
    exit_code = 2


class InconsistentGluing(ReplicaError, ValueError):
    exit_code = 2


class InfeasibleConstraint(ReplicaError, ValueError):
    exit_code = 2


class MaxIterations(ReplicaError):
    """Newton did not reach the gradient tolerance; ``best`` holds the last iterate."""

    exit_code = 4

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best
