class GPAError(Exception):
    """Base class for all errors raised by this package."""


class DataError(GPAError):
    """Problems with input data or files (CLI exit code 2)."""


class FormatMissing(DataError):
    pass


class ParseError(DataError):
    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path = path
        self.line = line


class CrossGraphEdge(DataError):
    pass


class MissingNodeLabels(DataError):
    pass


class DegenerateSplit(GPAError):
    pass


class TooManyFolds(GPAError):
    pass


class StratificationFailed(GPAError):
    pass


class ShapeError(GPAError):
    pass


class ZeroNormError(GPAError):
    pass


class NonScalarLoss(GPAError):
    pass


class NonFiniteGradient(GPAError):
    pass


class InsufficientBatch(GPAError):
    pass


class OracleTooExpensive(GPAError):
    pass
