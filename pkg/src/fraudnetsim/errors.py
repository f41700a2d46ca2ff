"""Exception types shared across the simulation engine."""


class SimulationError(Exception):
    """Base class for every error raised by the engine."""


class ParameterError(SimulationError, ValueError):
    """A distribution or model parameter lies outside its domain."""


class DegenerateInputError(SimulationError, ValueError):
    """Input carries no usable variation (constant vector, empty range, ...)."""


class SchemaError(SimulationError, KeyError):
    """A model term references a feature that is not present."""


class ConfigError(SimulationError, ValueError):
    """Configuration failed validation.

    ``violations`` lists every constraint that was broken, not just the first.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class CalibrationError(SimulationError, RuntimeError):
    """Intercept search could not bracket the target imbalance."""

    def __init__(self, message, best_intercept=None, best_prevalence=None):
        super().__init__(message)
        self.best_intercept = best_intercept
        self.best_prevalence = best_prevalence


class PipelineOrderError(SimulationError, RuntimeError):
    """A step consumed inputs that were not prepared by the preceding step."""


class UndefinedMetricError(SimulationError, ValueError):
    """A metric is undefined for the given input (e.g. a single class)."""


class SingularSystemError(SimulationError, ArithmeticError):
    """The IRLS normal equations are singular (collinear design)."""


class StepError(SimulationError):
    """An error raised inside a pipeline step, tagged with that step."""

    def __init__(self, step, cause):
        self.step = step
        self.cause = cause
        super().__init__(f"step {step}: {type(cause).__name__}: {cause}")
