"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line front end:
2 for invalid input or configuration, 3 for numerical failures, 4 for I/O.
"""


class ManifoldLassoError(Exception):
    exit_code = 1


class ValidationError(ManifoldLassoError, ValueError):
    exit_code = 2


class NumericalError(ManifoldLassoError, ArithmeticError):
    exit_code = 3


class IsolatedPointError(NumericalError):
    def __init__(self, index):
        self.index = int(index)
        super().__init__(
            f"point {self.index} has no neighbors within the neighborhood radius"
        )


class DegenerateNeighborhoodError(NumericalError):
    def __init__(self, index, message="neighborhood has rank smaller than d"):
        self.index = None if index is None else int(index)
        where = "" if index is None else f"point {self.index}: "
        super().__init__(where + message)


class RankDeficiencyError(NumericalError):
    def __init__(self, index, eigenvalues):
        self.index = None if index is None else int(index)
        self.eigenvalues = eigenvalues
        where = "" if index is None else f"point {self.index}: "
        super().__init__(
            where + f"local metric is rank deficient (top eigenvalues {eigenvalues})"
        )


class ConvergenceError(NumericalError):
    def __init__(self, message, attained=None):
        self.attained = attained
        super().__init__(message)


class InputFileError(ManifoldLassoError, OSError):
    exit_code = 4


class ParseError(InputFileError):
    def __init__(self, path, line, message):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class StageError(ManifoldLassoError):
    """Wraps an error raised inside a pipeline stage, keeping its exit code."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
        super().__init__(f"[{stage}] {cause}")
