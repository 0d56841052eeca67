"""Exception hierarchy shared by every pipeline stage."""


class BofError(Exception):
    """Base class for all errors raised by this package."""


class ContractError(BofError, ValueError):
    """An argument violates a documented shape or range contract."""


class ConfigurationError(BofError):
    pass


class DecodeError(BofError):
    pass


class SplitError(BofError):
    pass


class ExtractionError(BofError):
    pass


class SamplingError(BofError):
    pass


class NumericalError(BofError, ArithmeticError):
    pass


class DivergenceError(NumericalError):
    """Training produced a non-finite loss."""

    def __init__(self, epoch, learning_rate, what="loss"):
        super().__init__(
            f"non-finite {what} at epoch {epoch} (learning_rate={learning_rate})"
        )
        self.epoch = epoch
        self.learning_rate = learning_rate


class PoolingError(BofError):
    pass


class TrainingError(BofError):
    pass


class CompatibilityError(BofError):
    pass


class StageError(BofError):
    """Wraps a failure with the name of the pipeline stage that raised it."""

    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause
