"""
Exception types shared by the solver, oracle and command line
"""


class ConfigError(ValueError):
    """Invalid run configuration (counts, widths, domains, schedules, paths)"""


class StructuralError(ValueError):
    """Misuse of the tape or mismatched array shapes"""


class IngestionError(ValueError):
    """A property table or boundary series could not be read"""


class DataValidationError(ValueError):
    """Tabulated physical data violates a physical bound"""


class UndefinedRatioError(ValueError):
    """A relative error was requested against a zero reference norm"""


class MissingReferenceError(ValueError):
    """A check needs an exact solution the problem does not provide"""


class CheckpointError(ValueError):
    """A parameter checkpoint is missing or malformed"""


class TrainingDivergence(RuntimeError):
    """Loss or gradient became non-finite during training"""

    def __init__(self, iteration, message):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


class PicardNonConvergence(RuntimeError):
    """Fixed-point iteration of the oracle did not converge at a time step"""

    def __init__(self, step, last_change, iterations):
        super().__init__(
            f"Picard iteration did not converge at step {step} "
            f"after {iterations} iterations (last change {last_change:.3e})"
        )
        self.step = step
        self.last_change = last_change
        self.iterations = iterations
