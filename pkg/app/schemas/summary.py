# app/schemas/summary.py
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, computed_field


class CheckResult(BaseModel):
    """One measured maximum against its threshold."""

    name: str
    a: Optional[float] = None
    measured: float
    threshold: float
    eligible: int = 0
    tir_excluded: int = 0
    singular_excluded: int = 0
    wrong_side: int = 0
    filtered: int = 0
    reported: Dict[str, float] = Field(default_factory=dict)
    detail: Optional[str] = None

    @computed_field
    @property
    def passed(self) -> bool:
        return self.measured <= self.threshold


class ValidationSummary(BaseModel):
    scene: Optional[str] = None
    version: str
    tasks: List[str] = Field(default_factory=list)
    checks: List[CheckResult] = Field(default_factory=list)
    gap_points: int = 0
    events: int = 0
    artifacts: List[str] = Field(default_factory=list)

    @computed_field
    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)

    @computed_field
    @property
    def tir_excluded(self) -> int:
        return sum(check.tir_excluded for check in self.checks)

    @computed_field
    @property
    def singular_excluded(self) -> int:
        return sum(check.singular_excluded for check in self.checks)

    def failed(self) -> List[str]:
        return [
            check.name if check.a is None else f"{check.name}[a={check.a:g}]"
            for check in self.checks
            if not check.passed
        ]
