"""Exception hierarchy shared by every module."""


class QseError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgumentError(QseError, ValueError):
    pass


class InvalidCircuitError(QseError, ValueError):
    pass


class InvalidPlanError(QseError, ValueError):
    pass


class IncompleteResultsError(QseError, KeyError):
    pass


class ExecutorError(QseError, RuntimeError):
    """A fragment variant failed inside the executor.

    ``combination`` and ``fragment`` identify the failing instance.
    """

    def __init__(self, message, combination=None, fragment=None):
        super().__init__(message)
        self.combination = combination
        self.fragment = fragment


class ConfigError(QseError, ValueError):
    pass


class SimulationIntegrityError(QseError, RuntimeError):
    pass


class InfeasibleUnitError(QseError, ValueError):
    pass


class InvalidPipelineError(QseError, ValueError):
    pass
