"""Exception hierarchy.

Everything raised on purpose by the package derives from :class:`OEMError`,
so callers (and the CLI) can separate bad input from programming errors.
"""


class OEMError(Exception):
    """Base class for all package errors."""


class DataError(OEMError, ValueError):
    """Input data is unusable as given."""


class EmptyMatrixError(DataError):
    pass


class DimensionMismatchError(DataError):
    pass


class ZeroVarianceColumnError(DataError):
    def __init__(self, column: int):
        self.column = column
        super().__init__(f"column {column} has zero variance and cannot be scaled")


class EmptyFoldError(DataError):
    def __init__(self, fold: int):
        self.fold = fold
        super().__init__(f"fold {fold} contains no observations")


class BadKError(DataError):
    pass


class NonBinaryResponseError(DataError):
    pass


class PenaltyError(OEMError, ValueError):
    """Invalid penalty parameters, or parameters incompatible with the data."""


class AllWeightsZeroError(PenaltyError):
    pass


class NumericError(OEMError, ArithmeticError):
    pass


class NotConvergedError(NumericError):
    def __init__(self, max_iter: int):
        self.max_iter = max_iter
        super().__init__(f"eigenvalue iteration did not converge in {max_iter} steps")


class NotPSDError(NumericError):
    pass


class NonFiniteError(NumericError):
    def __init__(self, lambda_index: int, model: str = ""):
        self.lambda_index = lambda_index
        where = f" for model {model!r}" if model else ""
        super().__init__(f"non-finite coefficients at lambda index {lambda_index}{where}")


class FormatError(OEMError, ValueError):
    """A file does not follow the expected format."""


class IoError(FormatError, OSError):
    def __init__(self, path, reason: str = ""):
        self.path = str(path)
        super().__init__(f"{self.path}: {reason}" if reason else self.path)


class BadMagicError(IoError):
    pass


class TruncatedFileError(IoError):
    pass


class ParseError(FormatError):
    def __init__(self, line: int, col: int, text: str = ""):
        self.line = line
        self.col = col
        super().__init__(f"line {line}, column {col}: cannot parse {text!r} as a number")


class RaggedRowError(FormatError):
    def __init__(self, line: int, got: int, expected: int):
        self.line = line
        super().__init__(f"line {line}: expected {expected} fields, found {got}")


class MissingResponseError(FormatError):
    pass


class ModelError(OEMError, LookupError):
    pass


class UnknownModelError(ModelError):
    pass


class LambdaOutOfRangeError(ModelError):
    pass
