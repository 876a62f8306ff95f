"""Exception taxonomy shared across the package."""


class SafetuneError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SafetuneError):
    """Invalid configuration: bad dimensions, missing safe seed, unknown ids."""


class NumericalError(SafetuneError):
    """Linear-algebra failure that survived jitter escalation."""


class MeasurementError(SafetuneError):
    """Rejected observation (non-finite or wrong arity)."""


class CandidateLookupError(SafetuneError, KeyError):
    """Queried a candidate or context the state does not track."""


class OptimizationError(SafetuneError):
    """Acquisition optimizer could not produce a feasible point."""


class EnvironmentFault(SafetuneError):
    """The simulated plant produced non-finite state; the run must abort."""
