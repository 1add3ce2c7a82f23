"""Exception hierarchy."""


class RelaxHJBError(Exception):
    """Base class for all package errors."""


class ArgumentError(RelaxHJBError, ValueError):
    pass


class CapabilityError(RelaxHJBError):
    """Operation not supported by the given generator family."""


class ModelError(RelaxHJBError):
    pass


class PerturbationError(ModelError):
    pass


class DiscretizationError(RelaxHJBError):
    pass


class NotPSDError(RelaxHJBError, ValueError):
    pass


class SolverError(RelaxHJBError):
    """Raised when policy iteration fails to reach the residual tolerance.

    ``history`` holds the sup-residual after each iteration.
    """

    def __init__(self, message, history=()):
        super().__init__(message)
        self.history = list(history)


class SimulationError(RelaxHJBError):
    pass


class ConfigError(RelaxHJBError):
    def __init__(self, message, *, line=None, key=None):
        self.message = message
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
        self.line = line
        self.key = key
