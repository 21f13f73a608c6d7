from typing import Optional


class RXPError(Exception):
    """Base class for every error raised by the package."""


class InvalidArchitecture(RXPError, ValueError):
    pass


class DimensionError(RXPError, ValueError):
    pass


class EmptyDataset(RXPError, ValueError):
    pass


class InvalidArgument(RXPError, ValueError):
    pass


class DetectorNotFitted(RXPError):
    pass


class ZeroRelevanceMass(RXPError, ArithmeticError):
    """All relevance terms vanished, so the ranking cannot be normalized."""


class SingularSystem(RXPError, ArithmeticError):
    """The weighted regression behind Kernel SHAP has no unique solution."""


class TooManyFeatures(RXPError, ValueError):
    pass


class InvalidQuery(RXPError, ValueError):
    pass


class DegenerateVariance(RXPError, ArithmeticError):
    pass


class EmptyEvaluationPool(RXPError):
    pass


class ParseError(RXPError, ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ConfigError(RXPError):
    pass


class IoError(RXPError, OSError):
    pass
