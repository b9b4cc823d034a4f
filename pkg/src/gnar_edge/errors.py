"""Exception types raised across the package."""


class GnarEdgeError(Exception):
    """Base class for all package errors."""


class GraphError(GnarEdgeError, ValueError):
    pass


class PanelError(GnarEdgeError, ValueError):
    pass


class DegenerateEdgeError(PanelError):
    """A series has zero variance where a positive one is required."""

    def __init__(self, message, edge=None):
        super().__init__(message)
        self.edge = edge


class InsufficientHistoryError(GnarEdgeError, ValueError):
    pass


class SingularDesignError(GnarEdgeError, ValueError):
    """The regressor matrix is rank deficient."""

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(columns)


class UnderdeterminedError(GnarEdgeError, ValueError):
    pass


class SimulationOverflowError(GnarEdgeError, FloatingPointError):
    def __init__(self, message, time_index):
        super().__init__(message)
        self.time_index = time_index


class CsvFormatError(GnarEdgeError, ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
