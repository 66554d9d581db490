# app/models/geometry.py
from dataclasses import dataclass, field
from enum import Enum
from typing import Tuple

import numpy as np
import numpy.typing as npt

from app.errors import DomainError, IndicesEqualError

# Plane vectors are float64 arrays of shape (2,).
Vec2 = npt.NDArray[np.float64]


def vec2(x: float, y: float) -> Vec2:
    return np.array([x, y], dtype=float)


def norm(v: Vec2) -> float:
    return float(np.hypot(v[0], v[1]))


def cross(u: Vec2, v: Vec2) -> float:
    return float(u[0] * v[1] - u[1] * v[0])


def left_normal(v: Vec2) -> Vec2:
    """v rotated by +90 degrees."""
    return np.array([-v[1], v[0]], dtype=float)


def unit(v: Vec2) -> Vec2:
    length = norm(v)
    if length == 0.0:
        raise DomainError("cannot normalise the zero vector")
    return v / length


class Branch(str, Enum):
    """Loops of the complete Cartesian oval with foci F (origin) and x.

    INTERIOR: n1|y| + n2|y-x| = 2a
    EXTERIOR: -n1|y| + n2|y-x| = 2a
    REVERSED: n1|y| - n2|y-x| = 2a
    """

    INTERIOR = "interior"
    EXTERIOR = "exterior"
    REVERSED = "reversed"


DEFAULT_BRANCHES: Tuple[Branch, ...] = (Branch.INTERIOR, Branch.EXTERIOR)
ALL_BRANCHES: Tuple[Branch, ...] = (Branch.INTERIOR, Branch.EXTERIOR, Branch.REVERSED)


@dataclass(frozen=True)
class Media:
    n1: float  # side of F
    n2: float  # side of W

    def __post_init__(self):
        if not (self.n1 > 0 and self.n2 > 0):
            raise DomainError(f"refractive indices must be positive, got n1={self.n1}, n2={self.n2}")

    def require_distinct(self) -> None:
        if self.n1 == self.n2:
            raise IndicesEqualError(self.n1)

    def swapped(self) -> "Media":
        return Media(n1=self.n2, n2=self.n1)


@dataclass(frozen=True, eq=False)
class OvalSpec:
    """Complete oval with foci F = origin and `x`; bipolar constant k = 2a."""

    x: Vec2
    media: Media
    a: float

    def __post_init__(self):
        if self.a < 0:
            raise DomainError(f"oval parameter a must be non-negative, got {self.a}")
        if not np.all(np.isfinite(self.x)):
            raise DomainError("oval focus x must be finite")


@dataclass(frozen=True, eq=False)
class WavefrontSample:
    t: float
    point: Vec2
    tangent: Vec2
    normal: Vec2
    curvature: float  # signed: centre of curvature at point + normal / curvature

    @property
    def radius(self) -> float:
        return 1.0 / self.curvature

    def with_point(self, point: Vec2) -> "WavefrontSample":
        """Same frame and parameter, moved to another point of the normal line."""
        return WavefrontSample(
            t=self.t,
            point=point,
            tangent=self.tangent,
            normal=self.normal,
            curvature=self.curvature,
        )


@dataclass(frozen=True)
class Sampling:
    """Uniform parameter grid [t0, t1] with `count` samples."""

    t0: float
    t1: float
    count: int = field(default=512)

    def __post_init__(self):
        if self.count < 1:
            raise DomainError("sampling must contain at least one sample")
        if not (np.isfinite(self.t0) and np.isfinite(self.t1)):
            raise DomainError("sampling range must be finite")

    def grid(self) -> npt.NDArray[np.float64]:
        if self.count == 1:
            return np.array([self.t0], dtype=float)
        return np.linspace(self.t0, self.t1, self.count)

    @property
    def step(self) -> float:
        return 0.0 if self.count == 1 else (self.t1 - self.t0) / (self.count - 1)
