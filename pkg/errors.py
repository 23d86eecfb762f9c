# errors.py
"""
Exception types raised by the solver modules.

Each error also subclasses the builtin it refines (ValueError for bad input,
RuntimeError for numerical failures), so callers that only know the builtins
still catch them.
"""
from typing import List, Optional


class SemError(Exception):
    """Base class for every solver error."""


class ParameterError(SemError, ValueError):
    pass


class ConstructionError(SemError, RuntimeError):
    pass


class MeshGenerationError(SemError, ValueError):
    pass


class MeshParseError(SemError, ValueError):
    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)


class MeshValidationError(SemError, ValueError):
    pass


class CurvingError(SemError, RuntimeError):
    def __init__(self, message: str, element: Optional[int] = None):
        self.element = element
        super().__init__(message)


class GeometryError(SemError, RuntimeError):
    def __init__(self, message: str, element: Optional[int] = None):
        self.element = element
        super().__init__(message)


class DirichletError(SemError, ValueError):
    pass


class FactorizationError(SemError, RuntimeError):
    pass


class SeriesTooShortError(SemError, ValueError):
    pass


class DivergenceError(SemError, RuntimeError):
    def __init__(self, message: str, step: int):
        self.step = step
        super().__init__(f"step {step}: {message}")


class InstabilityError(SemError, RuntimeError):
    def __init__(self, message: str, step: Optional[int] = None):
        self.step = step
        super().__init__(message)


class EigenBudgetError(SemError, ValueError):
    pass


class ConfigError(SemError, ValueError):
    def __init__(self, message: str, key_paths: Optional[List[str]] = None):
        self.key_paths = key_paths or []
        super().__init__(message)
