# app/models/profile.py
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.models.geometry import ALL_BRANCHES, Branch, Media, Vec2, WavefrontSample


@dataclass(frozen=True)
class LambdaRoot:
    lam: float
    branch: Branch
    grazing: bool = False


class Family(str, Enum):
    """Which oval family a sheet envelops: O_x^a, or O_c^{a'} / O_c^{a''}."""

    DIRECT = "a"
    PRIME = "a_prime"
    DOUBLE_PRIME = "a_dblprime"


_FAMILY_ORDER = {family: i for i, family in enumerate(Family)}
_BRANCH_ORDER = {branch: i for i, branch in enumerate(ALL_BRANCHES)}


@dataclass(frozen=True)
class SheetKey:
    branch: Branch
    side: int  # sign of lambda at the sheet's seed point
    rank: int = 0
    family: Family = Family.DIRECT

    @property
    def sort_key(self) -> Tuple[int, int, int, int]:
        return (_FAMILY_ORDER[self.family], _BRANCH_ORDER[self.branch], -self.side, self.rank)

    @property
    def label(self) -> str:
        sign = "+" if self.side > 0 else "-"
        base = f"{self.branch.value}_{sign}{self.rank}"
        return base if self.family is Family.DIRECT else f"{self.family.value}_{base}"


@dataclass(frozen=True, eq=False)
class SheetPoint:
    sample: WavefrontSample
    lam: float
    y: Vec2
    branch: Branch
    residual: float
    singular: bool = False
    grazing: bool = False


@dataclass
class Sheet:
    key: SheetKey
    points: List[SheetPoint] = field(default_factory=list)
    breaks: List[int] = field(default_factory=list)  # indices where a new segment starts
    singular_indices: List[int] = field(default_factory=list)
    caustic_crossings: List[int] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.points)

    def segment_bounds(self) -> List[Tuple[int, int]]:
        starts = [0] + [b for b in self.breaks if 0 < b < len(self.points)]
        ends = starts[1:] + [len(self.points)]
        return [(s, e) for s, e in zip(starts, ends) if e > s]

    def segments(self) -> List[List[SheetPoint]]:
        return [self.points[s:e] for s, e in self.segment_bounds()]

    def positions(self) -> np.ndarray:
        if not self.points:
            return np.empty((0, 2))
        return np.array([p.y for p in self.points])

    def flagged_indices(self) -> List[int]:
        return sorted(set(self.singular_indices) | set(self.caustic_crossings))


class EventKind(str, Enum):
    GAP = "gap"
    MERGE = "merge"
    SPLIT = "split"
    APPEAR = "appear"
    RESUME = "resume"
    CONTAINMENT = "containment"


@dataclass(frozen=True)
class SheetEvent:
    t: float
    kind: EventKind
    key: Optional[SheetKey] = None
    note: str = ""


@dataclass
class Profile:
    a: float
    media: Media
    sheets: Dict[SheetKey, Sheet] = field(default_factory=dict)
    events: List[SheetEvent] = field(default_factory=list)

    def point_count(self) -> int:
        return sum(len(s) for s in self.sheets.values())

    def sheets_of(self, branch: Branch) -> List[Sheet]:
        return [s for k, s in self.sheets.items() if k.branch is branch]

    @property
    def singular_indices(self) -> Dict[SheetKey, List[int]]:
        return {k: list(s.singular_indices) for k, s in self.sheets.items()}
