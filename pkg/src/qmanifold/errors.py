"""Exception hierarchy shared by every stage of the pipeline.

Each class carries the process exit code the CLI reports when it escapes.
"""


class QManifoldError(Exception):
    exit_code = 2


class InvalidArgument(QManifoldError, ValueError):
    exit_code = 1


class DataError(QManifoldError):
    """Input data is malformed (ragged CSV, non-numeric cells, too few rows)."""

    exit_code = 2


class ParseError(DataError):
    pass


class UnsupportedOracle(QManifoldError):
    exit_code = 1


class DisconnectedGraph(QManifoldError):
    """A kernel graph has a vertex with no neighbour other than itself."""

    def __init__(self, vertex, message=None):
        self.vertex = int(vertex)
        super().__init__(message or f"vertex {self.vertex} is isolated in the kernel graph")


class NumericalFailure(QManifoldError):
    exit_code = 3


class DegenerateNeighborhood(QManifoldError):
    pass


class SparseNeighborhood(QManifoldError):
    pass


class UncertaintyRegimeViolation(QManifoldError):
    """Raised when h <= sqrt(epsilon); propagation is not resolved at that scale."""

    exit_code = 1


class DegenerateState(NumericalFailure):
    pass


class ConditioningWarning(UserWarning):
    pass


class PipelineStageError(QManifoldError):
    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 3)
        super().__init__(f"stage '{stage}' failed: {cause}")
