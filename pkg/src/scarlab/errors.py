"""Exception types shared across the package."""


class ScarlabError(Exception):
    """Base class for all scarlab errors."""


class StructuralError(ScarlabError):
    """Unit sets or per-unit dimensions do not line up."""


class ArgumentError(ScarlabError):
    """An argument value is outside its documented domain."""


class DivergenceError(ScarlabError):
    """A solver produced non-finite values or a runaway loss."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


class NonConvergenceError(ScarlabError):
    """A trace never met its convergence criterion."""

    def __init__(self, message: str, trace=None):
        super().__init__(message)
        self.trace = trace


class EstimationError(ScarlabError):
    """A contraction factor could not be estimated from a trace."""


class SaturationError(ScarlabError):
    """An implicit bound search exhausted its iteration budget."""


class CheckpointLogError(ScarlabError):
    """A checkpoint log file is malformed or truncated."""


class ConfigError(ScarlabError):
    """An experiment configuration is invalid."""
