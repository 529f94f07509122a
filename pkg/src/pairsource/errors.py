"""Exception and warning classes shared across the package."""


class PairSourceError(Exception):
    """Base class for all errors raised by pairsource."""


class DomainError(PairSourceError, ValueError):
    """An argument lies outside the domain where the model is defined."""


class NoSolutionError(PairSourceError):
    """A root or fit has no solution in the requested interval."""


class ConfigError(PairSourceError, ValueError):
    """Invalid configuration (schema, units, or physically inconsistent values)."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class StreamError(PairSourceError, ValueError):
    """Malformed or inconsistent timestamp stream."""


class DegenerateDesignError(PairSourceError):
    """The normal equations of a fit are singular."""


class ConvergenceWarning(UserWarning):
    """An iterative method stopped before reaching its tolerance."""


class ApproximationWarning(UserWarning):
    """A model is being used outside the regime where its approximation holds."""


class TemperatureUncorrectedWarning(UserWarning):
    """A refractive index was evaluated without thermo-optic correction."""
