"""Exception hierarchy shared by every stage of the pipeline."""


class PmuSentinelError(Exception):
    """Base class for all errors raised by pmu_sentinel."""


class ParameterError(PmuSentinelError, ValueError):
    """An argument is outside its permitted range."""


class ShapeError(PmuSentinelError, ValueError):
    """Array shapes are incompatible."""


class SchemaError(PmuSentinelError):
    """A file does not follow the expected layout (header, columns)."""


class ParseError(PmuSentinelError):
    """A cell could not be parsed as a number."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class IntegrityError(PmuSentinelError):
    """Data is structurally readable but violates a dataset invariant."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class PlacementError(PmuSentinelError):
    """Anomaly episodes cannot be placed without overlap."""


class AlignmentError(PmuSentinelError, ValueError):
    """Flags and ground truth do not line up."""


class TrainingError(PmuSentinelError, FloatingPointError):
    """Training produced a non-finite loss or parameter."""


class DependencyError(PmuSentinelError):
    """An upstream artifact expected by a pipeline stage is missing."""

    def __init__(self, message, path=None):
        super().__init__(message)
        self.path = path
