# app/errors.py
"""Exception hierarchy. Each class carries the exit code the CLI reports."""

from typing import List, Optional


class RefractorError(Exception):
    exit_code: int = 1

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail

    def with_context(self, context: str) -> "RefractorError":
        """Prefix the message with scene-level context, keeping the class."""
        self.detail = f"{context}: {self.detail}"
        self.args = (self.detail,)
        return self


# ========= SCENE (exit 2) =========

class SceneError(RefractorError):
    exit_code = 2


class ParseError(SceneError):
    def __init__(self, detail: str, line: Optional[int] = None, column: Optional[int] = None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(f"{detail}{where}")
        self.line = line
        self.column = column


class SchemaError(SceneError):
    def __init__(self, violations: List[str]):
        super().__init__("scene schema violations: " + "; ".join(violations))
        self.violations = violations


# ========= GEOMETRY (exit 3) =========

class GeometryError(RefractorError):
    exit_code = 3


class DomainError(GeometryError):
    pass


class DegenerateParametrizationError(GeometryError):
    pass


class IndicesEqualError(GeometryError):
    def __init__(self, n: float):
        super().__init__(f"refractive indices are equal (n1 = n2 = {n}); the oval quadratic degenerates")


class EmptyBranchError(GeometryError):
    pass


class EmptyProfileError(GeometryError):
    pass


class ZeroGradientError(GeometryError):
    pass


class FlatPointError(GeometryError):
    pass


class DegenerateCausticError(GeometryError):
    pass


class GeometryMismatchError(GeometryError):
    pass


# ========= VALIDATION (exit 4) =========

class ValidationFailedError(RefractorError):
    exit_code = 4

    def __init__(self, failed: List[str]):
        super().__init__("validation thresholds exceeded: " + ", ".join(failed))
        self.failed = failed


# ========= OPTICS (internal) =========

class TotalInternalReflectionError(RefractorError):
    """No transmitted ray; caught inside the optics module."""

    def __init__(self, incidence: float, critical: float):
        super().__init__(f"total internal reflection: incidence {incidence:.6f} rad > critical {critical:.6f} rad")
        self.incidence = incidence
        self.critical = critical
