"""
Error types raised by the services
"""
from typing import Any, Dict, Optional


class MVLabError(Exception):
    """Base class for all lab errors"""


class CatalogError(MVLabError, ValueError):
    pass


class DomainError(MVLabError, ValueError):
    pass


class ConfigError(MVLabError, ValueError):
    def __init__(self, message: str, key: Optional[str] = None, line: Optional[int] = None):
        self.key = key
        self.line = line
        where = ""
        if key is not None:
            where = f" [key={key}" + (f", line={line}" if line is not None else "") + "]"
        super().__init__(message + where)


class TruncationError(MVLabError):
    def __init__(self, message: str, truncation: float, endpoint_mass: float):
        self.truncation = truncation
        self.endpoint_mass = endpoint_mass
        super().__init__(message)


class BasisDegradationError(MVLabError):
    def __init__(self, message: str, tail: bool = False):
        # tail=True: the fix is a larger truncation rather than a smaller basis
        self.tail = tail
        super().__init__(message)


class AssemblyError(MVLabError):
    pass


class NormalizationError(MVLabError):
    pass


class EigensolverError(MVLabError):
    pass


class StiffnessError(MVLabError):
    pass


class InsufficientDataError(MVLabError):
    pass


class FitWindowError(MVLabError):
    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        self.diagnostics = diagnostics or {}
        super().__init__(message)


class DivergenceError(MVLabError):
    def __init__(self, message: str, time: float):
        self.time = time
        super().__init__(message)


class MetricClassError(MVLabError):
    def __init__(self, prop: str, witness: Any, detail: str = ""):
        self.prop = prop
        self.witness = witness
        super().__init__(f"metric-class violation: {prop} fails at {witness}" + (f" ({detail})" if detail else ""))


class NumericError(MVLabError, ArithmeticError):
    pass
