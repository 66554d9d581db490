# app/models/optics.py
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional

import numpy as np

from app.errors import DomainError
from app.models.geometry import Vec2, norm


@dataclass(frozen=True, eq=False)
class Ray:
    origin: Vec2
    dir: Vec2

    def __post_init__(self):
        if abs(norm(self.dir) - 1.0) > 1e-12:
            raise DomainError(f"ray direction must be a unit vector, |dir| = {norm(self.dir)!r}")

    def at(self, distance: float) -> Vec2:
        return self.origin + distance * self.dir

    def reversed(self) -> "Ray":
        return Ray(origin=self.origin, dir=-self.dir)


class Exclusion(str, Enum):
    TIR = "tir"
    SINGULAR = "singular"
    WRONG_SIDE = "wrong_side"
    FILTERED = "filtered"  # fails a theorem's stated precondition
    DEGENERATE = "degenerate"  # no usable sheet normal


@dataclass(frozen=True, eq=False)
class RayRecord:
    sheet: str
    t: float
    y: Vec2
    incidence: float
    deviation: Optional[float] = None
    path: Optional[float] = None
    direction: Optional[Vec2] = None
    excluded: Optional[Exclusion] = None

    @property
    def tir(self) -> bool:
        return self.excluded is Exclusion.TIR

    @property
    def eligible(self) -> bool:
        return self.excluded is None


@dataclass
class RefractionReport:
    """Per-ray records of one oracle; aggregates are computed over eligible rays."""

    check: str
    records: List[RayRecord] = field(default_factory=list)
    reference_path: Optional[float] = None

    def merge(self, other: "RefractionReport") -> "RefractionReport":
        reference = self.reference_path if self.reference_path == other.reference_path else None
        return RefractionReport(self.check, self.records + other.records, reference)

    def _eligible(self) -> List[RayRecord]:
        return [r for r in self.records if r.eligible]

    def count(self, reason: Exclusion) -> int:
        return sum(1 for r in self.records if r.excluded is reason)

    @property
    def eligible_count(self) -> int:
        return len(self._eligible())

    @property
    def tir_count(self) -> int:
        return self.count(Exclusion.TIR)

    @property
    def singular_excluded(self) -> int:
        return self.count(Exclusion.SINGULAR)

    @property
    def wrong_side(self) -> int:
        return self.count(Exclusion.WRONG_SIDE)

    @property
    def filtered(self) -> int:
        return self.count(Exclusion.FILTERED)

    @property
    def max_deviation(self) -> float:
        deviations = [r.deviation for r in self._eligible() if r.deviation is not None]
        return max(deviations, default=0.0)

    @property
    def path_spread(self) -> float:
        """max |path - reference| when a reference exists, otherwise max - min."""
        paths = np.array([r.path for r in self._eligible() if r.path is not None])
        if paths.size == 0:
            return 0.0
        if self.reference_path is not None:
            return float(np.max(np.abs(paths - self.reference_path)))
        return float(paths.max() - paths.min())

    def worst(self) -> Optional[RayRecord]:
        candidates = [r for r in self._eligible() if r.deviation is not None]
        return max(candidates, key=lambda r: r.deviation, default=None)
