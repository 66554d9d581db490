# app/services/geom.py
"""Wavefront curves: evaluation, frames and signed curvature.

Every curve exposes exact first and second derivatives. The unit normal is
`orientation * left_normal(tangent)` and the signed curvature is
kappa = dT/ds . n, so the centre of curvature is always point + normal / kappa.
"""

import logging
import math
from abc import ABC, abstractmethod
from typing import List, Sequence, Tuple

import numpy as np
from scipy.interpolate import CubicSpline

from app.errors import DegenerateParametrizationError, DomainError
from app.models.geometry import (
    Sampling,
    Vec2,
    WavefrontSample,
    cross,
    left_normal,
    norm,
    vec2,
)
from app.services.executor import ordered_map

logger = logging.getLogger(__name__)

MIN_SPEED = 1e-12


def _rotation(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]], dtype=float)


def _check_orientation(orientation: int) -> int:
    if orientation not in (1, -1):
        raise DomainError(f"orientation must be +1 or -1, got {orientation}")
    return orientation


class Curve(ABC):
    kind: str = "curve"

    def __init__(self, orientation: int):
        self.orientation = _check_orientation(orientation)

    def domain(self) -> Tuple[float, float]:
        return (-math.inf, math.inf)

    def check_domain(self, t: float) -> None:
        lo, hi = self.domain()
        if not math.isfinite(t) or t < lo or t > hi:
            raise DomainError(f"{self.kind}: parameter t={t} outside domain [{lo}, {hi}]")

    @abstractmethod
    def point(self, t: float) -> Vec2:
        ...

    @abstractmethod
    def derivatives(self, t: float) -> Tuple[Vec2, Vec2]:
        """First and second derivative with respect to t."""

    @abstractmethod
    def flipped(self) -> "Curve":
        """Same curve with the opposite orientation."""

    @abstractmethod
    def translated(self, shift: Vec2) -> "Curve":
        ...


class Circle(Curve):
    """center + radius (cos t, sin t); orientation -1 points away from the centre."""

    kind = "circle"

    def __init__(self, center: Sequence[float], radius: float, orientation: int = -1):
        super().__init__(orientation)
        if not radius > 0:
            raise DomainError(f"circle radius must be positive, got {radius}")
        self.center = np.asarray(center, dtype=float)
        self.radius = float(radius)

    def point(self, t: float) -> Vec2:
        return self.center + self.radius * vec2(math.cos(t), math.sin(t))

    def derivatives(self, t: float) -> Tuple[Vec2, Vec2]:
        c, s = math.cos(t), math.sin(t)
        return self.radius * vec2(-s, c), -self.radius * vec2(c, s)

    def flipped(self) -> "Circle":
        return Circle(self.center, self.radius, -self.orientation)

    def translated(self, shift: Vec2) -> "Circle":
        return Circle(self.center + shift, self.radius, self.orientation)


class _RigidCurve(Curve):
    """Local curve mapped by rotation then offset."""

    def __init__(self, rotation: float, offset: Sequence[float], orientation: int):
        super().__init__(orientation)
        self.rotation = float(rotation)
        self.offset = np.asarray(offset, dtype=float)
        self._rot = _rotation(self.rotation)

    @abstractmethod
    def _local(self, t: float) -> Tuple[Vec2, Vec2, Vec2]:
        ...

    def point(self, t: float) -> Vec2:
        p, _, _ = self._local(t)
        return self._rot @ p + self.offset

    def derivatives(self, t: float) -> Tuple[Vec2, Vec2]:
        _, d1, d2 = self._local(t)
        return self._rot @ d1, self._rot @ d2


class Parabola(_RigidCurve):
    """(t, t^2 / (2p)); orientation +1 points toward the concave side."""

    kind = "parabola"

    def __init__(
        self,
        focal_scale: float = 1.0,
        rotation: float = 0.0,
        offset: Sequence[float] = (0.0, 0.0),
        orientation: int = 1,
    ):
        super().__init__(rotation, offset, orientation)
        if focal_scale == 0:
            raise DomainError("parabola focal scale must be nonzero")
        self.focal_scale = float(focal_scale)

    def _local(self, t: float) -> Tuple[Vec2, Vec2, Vec2]:
        p = self.focal_scale
        return vec2(t, t * t / (2 * p)), vec2(1.0, t / p), vec2(0.0, 1.0 / p)

    def flipped(self) -> "Parabola":
        return Parabola(self.focal_scale, self.rotation, self.offset, -self.orientation)

    def translated(self, shift: Vec2) -> "Parabola":
        return Parabola(self.focal_scale, self.rotation, self.offset + shift, self.orientation)


class Ellipse(_RigidCurve):
    """(A cos t, B sin t); orientation -1 points away from the centre."""

    kind = "ellipse"

    def __init__(
        self,
        semi_axes: Sequence[float],
        rotation: float = 0.0,
        offset: Sequence[float] = (0.0, 0.0),
        orientation: int = -1,
    ):
        super().__init__(rotation, offset, orientation)
        axes = tuple(float(v) for v in semi_axes)
        if len(axes) != 2 or min(axes) <= 0:
            raise DomainError(f"ellipse semi-axes must be two positive numbers, got {semi_axes}")
        self.semi_axes = axes

    def _local(self, t: float) -> Tuple[Vec2, Vec2, Vec2]:
        A, B = self.semi_axes
        c, s = math.cos(t), math.sin(t)
        return vec2(A * c, B * s), vec2(-A * s, B * c), vec2(-A * c, -B * s)

    def flipped(self) -> "Ellipse":
        return Ellipse(self.semi_axes, self.rotation, self.offset, -self.orientation)

    def translated(self, shift: Vec2) -> "Ellipse":
        return Ellipse(self.semi_axes, self.rotation, self.offset + shift, self.orientation)


class SplineCurve(Curve):
    """Natural cubic spline through control points, parametrized by chord length."""

    kind = "spline"

    def __init__(self, points: Sequence[Sequence[float]], orientation: int = 1):
        super().__init__(orientation)
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise DomainError("spline needs at least two 2D control points")
        chords = np.hypot(*np.diff(pts, axis=0).T)
        if np.any(chords <= 0):
            raise DegenerateParametrizationError("spline control points must be pairwise distinct in sequence")
        self.points = pts
        self.knots = np.concatenate([[0.0], np.cumsum(chords)])
        self._spline = CubicSpline(self.knots, pts, bc_type="natural", axis=0)

    def domain(self) -> Tuple[float, float]:
        return (0.0, float(self.knots[-1]))

    def point(self, t: float) -> Vec2:
        return np.asarray(self._spline(t), dtype=float)

    def derivatives(self, t: float) -> Tuple[Vec2, Vec2]:
        return (
            np.asarray(self._spline(t, 1), dtype=float),
            np.asarray(self._spline(t, 2), dtype=float),
        )

    def flipped(self) -> "SplineCurve":
        return SplineCurve(self.points, -self.orientation)

    def translated(self, shift: Vec2) -> "SplineCurve":
        return SplineCurve(self.points + shift, self.orientation)


def _signed_curvature(d1: Vec2, d2: Vec2, orientation: int) -> float:
    speed = norm(d1)
    return orientation * cross(d1, d2) / speed**3


def sample_wavefront(curve: Curve, t: float) -> WavefrontSample:
    curve.check_domain(t)
    d1, d2 = curve.derivatives(t)
    speed = norm(d1)
    if speed < MIN_SPEED:
        raise DegenerateParametrizationError(f"{curve.kind}: |x'(t)| = {speed:.3e} at t={t}")
    tangent = d1 / speed
    return WavefrontSample(
        t=float(t),
        point=curve.point(t),
        tangent=tangent,
        normal=curve.orientation * left_normal(tangent),
        curvature=_signed_curvature(d1, d2, curve.orientation),
    )


def sample_curve(curve: Curve, sampling: Sampling, workers: int = 1) -> List[WavefrontSample]:
    return ordered_map(lambda t: sample_wavefront(curve, float(t)), sampling.grid(), workers)


def normal_offset(sample: WavefrontSample, lam: float) -> Vec2:
    return sample.point + lam * sample.normal


def finite_difference_curvature(curve: Curve, t: float, h: float = 1e-4) -> float:
    """Central-difference estimate of the signed curvature (independent of `derivatives`)."""
    if not h > 0:
        raise DomainError(f"finite-difference step must be positive, got {h}")
    curve.check_domain(t - h)
    curve.check_domain(t + h)
    before, here, after = curve.point(t - h), curve.point(t), curve.point(t + h)
    d1 = (after - before) / (2 * h)
    d2 = (after - 2 * here + before) / (h * h)
    if norm(d1) < MIN_SPEED:
        raise DegenerateParametrizationError(f"{curve.kind}: vanishing difference quotient at t={t}")
    return _signed_curvature(d1, d2, curve.orientation)
