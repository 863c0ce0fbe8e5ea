"""Exception types raised across the workbench."""

from typing import Optional


class WorkbenchError(Exception):
    """Base class for all workbench errors."""


class ScenarioError(WorkbenchError, ValueError):
    """A scenario or fixed-cell mask violates its invariants."""


class ModelConfigError(WorkbenchError, ValueError):
    """A network configuration cannot be built for the requested grid."""


class GrfError(WorkbenchError):
    """The covariance embedding of a random field is not positive semi-definite."""


class DomainError(WorkbenchError, ValueError):
    """A physical parameter lies outside its admissible domain."""


class DegenerateSystemError(WorkbenchError):
    """The linear system has no unknowns."""


class SizeLimitError(WorkbenchError):
    """A dense operation was requested on a grid that is too large."""


class ConvergenceError(WorkbenchError):
    """The iterative solver hit its iteration cap."""

    def __init__(self, iterations: int, residual: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"solver did not converge after {iterations} iterations "
            f"(relative residual {residual:.3e})"
        )

    def __reduce__(self):
        return (type(self), (self.iterations, self.residual))


class EncodingError(WorkbenchError, ValueError):
    """A head field cannot be encoded into a sample."""


class GenerationError(WorkbenchError):
    """Generating a dataset sample failed."""

    def __init__(self, index: int, cause: Exception):
        self.index = index
        self.cause = cause
        super().__init__(f"sample {index}: {cause}")

    def __reduce__(self):
        return (type(self), (self.index, self.cause))


class DatasetFormatError(WorkbenchError):
    """A dataset file is malformed."""

    def __init__(self, reason: str, offset: int):
        self.reason = reason
        self.offset = offset
        super().__init__(f"{reason} (offset {offset})")

    def __reduce__(self):
        return (type(self), (self.reason, self.offset))


class ShapeError(WorkbenchError, ValueError):
    """An array does not have the shape an operation requires."""

    def __init__(self, expected, actual, block: Optional[str] = None):
        self.expected = expected
        self.actual = actual
        self.block = block
        where = f"{block}: " if block else ""
        super().__init__(f"{where}expected shape {expected}, got {actual}")


class CheckpointError(WorkbenchError):
    """A checkpoint does not match the model it is loaded into."""


class NonFiniteGradientError(WorkbenchError, FloatingPointError):
    """A gradient contains NaN or infinity."""

    def __init__(self, name: str):
        self.name = name
        super().__init__(f"non-finite gradient for parameter '{name}'")


class TrainingDivergedError(WorkbenchError):
    """The training loss became non-finite."""

    def __init__(self, epoch: int, batch: int, loss: float):
        self.epoch = epoch
        self.batch = batch
        self.loss = loss
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, batch {batch}")


class MetricError(WorkbenchError, ValueError):
    """A metric is undefined for the given data."""


class McDropoutError(WorkbenchError):
    """Monte-Carlo dropout was requested on a model without dropout."""
