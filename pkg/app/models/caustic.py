# app/models/caustic.py
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np

from app.models.geometry import Vec2, WavefrontSample


@dataclass(frozen=True, eq=False)
class CausticPoint:
    c: Vec2
    source: WavefrontSample
    rho: float  # signed curvature radius: c = source.point + rho * source.normal

    @property
    def x(self) -> Vec2:
        return self.source.point


@dataclass(frozen=True)
class CausticGap:
    t_start: float
    t_end: float
    reason: str


@dataclass
class CausticCurve:
    points: List[CausticPoint] = field(default_factory=list)
    gaps: List[CausticGap] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    def positions(self) -> np.ndarray:
        if not self.points:
            return np.empty((0, 2))
        return np.array([p.c for p in self.points])


@dataclass(frozen=True)
class SweepParams:
    a1: float
    a2: float


@dataclass(frozen=True)
class ReconstructionParams:
    a_prime: float
    a_dblprime: float


class Region(str, Enum):
    """Convex: caustic and F on opposite sides of W."""

    CONVEX = "convex"
    CONCAVE = "concave"


@dataclass(frozen=True)
class SheetContainment:
    """Distance from one profile sheet to the caustic-family ovals assigned to its points."""

    sheet: str
    targets: Tuple[str, ...]  # "<family>/<branch>" of the ovals through O_c
    forward: float
    count: int


@dataclass(frozen=True)
class ContainmentReport:
    forward: float  # max distance from profile points to their assigned reconstruction sheets
    reverse: float  # max distance from reconstruction points to the profile
    diameter: float
    region: Optional[Region] = None
    sheets: Dict[str, SheetContainment] = field(default_factory=dict)

    @property
    def relative_forward(self) -> float:
        return self.forward / self.diameter if self.diameter > 0 else self.forward
