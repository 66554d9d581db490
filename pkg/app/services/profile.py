# app/services/profile.py
"""Envelope sheets R^a as normal-offset points of W lying on the ovals O_x^a.

For y = x + lam n we have |y - x| = |lam| and |y|^2 = x^2 + 2 lam (x.n) + lam^2,
so each sign pattern of the complete oval turns into one of two quadratics

    n1^2 |y|^2 = (2a - n2 tau lam)^2,    tau = +1, -1

whose real roots are classified by substitution into the branch equations.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from app.config import get_settings
from app.errors import DomainError, EmptyProfileError
from app.models.geometry import (
    ALL_BRANCHES,
    DEFAULT_BRANCHES,
    Branch,
    Media,
    OvalSpec,
    Sampling,
    Vec2,
    WavefrontSample,
    cross,
    norm,
)
from app.models.profile import (
    EventKind,
    Family,
    LambdaRoot,
    Profile,
    Sheet,
    SheetEvent,
    SheetKey,
    SheetPoint,
)
from app.services.executor import ordered_map
from app.services.geom import Curve, normal_offset, sample_curve, sample_wavefront
from app.services.oval import (
    bipolar_residual,
    contains,
    membership_scale,
    residual_gradient,
    solve_quadratic,
)

logger = logging.getLogger(__name__)


def oval_of(sample: WavefrontSample, media: Media, a: float) -> OvalSpec:
    return OvalSpec(x=sample.point, media=media, a=a)


# ========= ROOTS =========

def discriminants(sample: WavefrontSample, media: Media, a: float) -> Tuple[float, float]:
    n1, n2 = media.n1, media.n2
    xn = float(sample.point @ sample.normal)
    xx = float(sample.point @ sample.point)
    tail = (n2 * n2 - n1 * n1) * (4.0 * a * a - n1 * n1 * xx)
    return (
        (2.0 * a * n2 + n1 * n1 * xn) ** 2 - tail,
        (2.0 * a * n2 - n1 * n1 * xn) ** 2 - tail,
    )


def solve_lambda(
    sample: WavefrontSample,
    media: Media,
    a: float,
    branches: Sequence[Branch] = DEFAULT_BRANCHES,
    tol: Optional[float] = None,
) -> List[LambdaRoot]:
    """Signed offsets lam such that x + lam n lies on a requested branch of O_x^a."""
    media.require_distinct()
    if a < 0:
        raise DomainError(f"oval parameter a must be non-negative, got {a}")
    settings = get_settings()
    n1, n2 = media.n1, media.n2
    xn = float(sample.point @ sample.normal)
    xx = float(sample.point @ sample.point)
    spec = oval_of(sample, media, a)

    A = n2 * n2 - n1 * n1
    C = 4.0 * a * a - n1 * n1 * xx
    roots: List[LambdaRoot] = []
    for tau in (1.0, -1.0):
        B = -2.0 * (2.0 * a * n2 * tau + n1 * n1 * xn)
        for lam, grazing in solve_quadratic(A, B, C, settings.grazing_tol):
            branch = contains(normal_offset(sample, lam), spec, tol, branches)
            if branch is None:
                continue
            if any(r.branch is branch and abs(r.lam - lam) <= 1e-12 * (1.0 + abs(lam)) for r in roots):
                continue
            roots.append(LambdaRoot(lam=lam, branch=branch, grazing=grazing))
    return sorted(roots, key=lambda r: r.lam)


def is_singular(sample: WavefrontSample, lam: float, tol: Optional[float] = None) -> bool:
    """True when y = x + lam n is a centre of curvature of W (lam * kappa = 1)."""
    if tol is None:
        tol = get_settings().singular_tol
    if not tol > 0:
        raise DomainError(f"singularity tolerance must be positive, got {tol}")
    return abs(lam * sample.curvature - 1.0) <= tol


def tangency_angle(
    y: Vec2,
    spec: OvalSpec,
    sheet_tangent: Vec2,
    branch: Optional[Branch] = None,
) -> float:
    """Angle in [0, pi/2] between a sheet tangent and the oval's tangent line at y."""
    if norm(sheet_tangent) == 0.0:
        raise DomainError("sheet tangent must be nonzero")
    if branch is None:
        branch = contains(y, spec, 1e-6, ALL_BRANCHES) or min(
            ALL_BRANCHES, key=lambda b: abs(bipolar_residual(y, spec, b))
        )
    grad = residual_gradient(y, spec, branch)
    oval_tangent = np.array([-grad[1], grad[0]])
    return math.atan2(abs(cross(sheet_tangent, oval_tangent)), abs(float(sheet_tangent @ oval_tangent)))


def _sheet_point(sample: WavefrontSample, root: LambdaRoot, media: Media, a: float, singular_tol: float) -> SheetPoint:
    y = normal_offset(sample, root.lam)
    return SheetPoint(
        sample=sample,
        lam=root.lam,
        y=y,
        branch=root.branch,
        residual=bipolar_residual(y, oval_of(sample, media, a), root.branch),
        singular=is_singular(sample, root.lam, singular_tol),
        grazing=root.grazing,
    )


def side_of(lam: float) -> int:
    return 1 if lam >= 0.0 else -1


def sheet_point_at(
    curve: Curve,
    media: Media,
    a: float,
    key: SheetKey,
    t: float,
    hint: float,
) -> Optional[SheetPoint]:
    """Re-solve the sheet `key` at parameter t, taking the root nearest to `hint`."""
    sample = sample_wavefront(curve, t)
    roots = [
        r for r in solve_lambda(sample, media, a, branches=(key.branch,))
        if side_of(r.lam) == key.side
    ]
    if not roots:
        return None
    best = min(roots, key=lambda r: abs(r.lam - hint))
    return _sheet_point(sample, best, media, a, get_settings().singular_tol)


# ========= SHEET ASSEMBLY =========

@dataclass
class _Track:
    last_lam: float
    last_index: int
    last_defect: float
    active: bool = True


@dataclass
class SheetAssembler:
    """Routes per-sample points to persistent sheets by nearest-lambda continuity."""

    a: float
    media: Media
    family: Family = Family.DIRECT
    sheets: Dict[SheetKey, Sheet] = field(default_factory=dict)
    tracks: Dict[SheetKey, _Track] = field(default_factory=dict)
    events: List[SheetEvent] = field(default_factory=list)
    index: int = 0

    def skip(self, t: float, note: str = "") -> None:
        """Close every active sheet at a sample that yields nothing by construction."""
        for key, track in self.tracks.items():
            if track.active:
                track.active = False
                self.events.append(SheetEvent(t, EventKind.GAP, key, note))
        self.index += 1

    def add(self, t: float, entries: List[Tuple[int, SheetPoint]]) -> None:
        """Route (side, point) pairs of one sample; side is the sign of the solved offset."""
        classes: Dict[Tuple[Branch, int], List[SheetPoint]] = {}
        for side, point in entries:
            classes.setdefault((point.branch, side), []).append(point)

        for key, track in self.tracks.items():
            if track.active and (key.branch, key.side) not in classes:
                track.active = False
                self.events.append(SheetEvent(t, EventKind.GAP, key))

        for cls in sorted(classes, key=lambda c: (c[0].value, -c[1])):
            self._route(t, cls, classes[cls])
        self.index += 1

    def _route(self, t: float, cls: Tuple[Branch, int], points: List[SheetPoint]) -> None:
        keys = sorted(
            (k for k in self.tracks if (k.branch, k.side) == cls),
            key=lambda k: k.rank,
        )
        active = [k for k in keys if self.tracks[k].active]
        pairs = sorted(
            (abs(point.lam - self.tracks[k].last_lam), i, k.rank, k)
            for i, point in enumerate(points)
            for k in active
        )
        assigned: Dict[int, SheetKey] = {}
        used = set()
        for _, i, _, k in pairs:
            if i in assigned or k in used:
                continue
            assigned[i] = k
            used.add(k)

        for k in active:
            if k not in used:
                self.tracks[k].active = False
                self.events.append(SheetEvent(t, EventKind.MERGE, k))

        for i, point in enumerate(points):
            key = assigned.get(i)
            resumed = False
            if key is None:
                idle = [k for k in keys if not self.tracks[k].active and k not in used]
                if idle:
                    key = min(idle, key=lambda k: (abs(point.lam - self.tracks[k].last_lam), k.rank))
                    resumed = True
                    self.events.append(SheetEvent(t, EventKind.RESUME, key))
                else:
                    key = SheetKey(branch=cls[0], side=cls[1], rank=len(keys), family=self.family)
                    keys.append(key)
                    if self.index > 0:
                        kind = EventKind.SPLIT if active else EventKind.APPEAR
                        self.events.append(SheetEvent(t, kind, key))
                used.add(key)
            self._append(key, point, resumed)

    def _append(self, key: SheetKey, point: SheetPoint, resumed: bool) -> None:
        sheet = self.sheets.setdefault(key, Sheet(key=key))
        position = len(sheet.points)
        if resumed and position > 0:
            sheet.breaks.append(position)
        sheet.points.append(point)
        if point.singular:
            sheet.singular_indices.append(position)

        defect = point.lam * point.sample.curvature - 1.0
        track = self.tracks.get(key)
        if (
            track is not None
            and not resumed
            and track.last_index == self.index - 1
            and defect * track.last_defect < 0.0
        ):
            nearer = position if abs(defect) < abs(track.last_defect) else position - 1
            if nearer not in sheet.caustic_crossings:
                sheet.caustic_crossings.append(nearer)
        self.tracks[key] = _Track(last_lam=point.lam, last_index=self.index, last_defect=defect)

    def finish(self) -> Profile:
        ordered = dict(sorted(self.sheets.items(), key=lambda item: item[0].sort_key))
        return Profile(a=self.a, media=self.media, sheets=ordered, events=self.events)


def build_profile(
    curve: Curve,
    media: Media,
    a: float,
    sampling: Sampling,
    branches: Sequence[Branch] = DEFAULT_BRANCHES,
    tol: Optional[float] = None,
    singular_tol: Optional[float] = None,
    workers: Optional[int] = None,
) -> Profile:
    media.require_distinct()
    settings = get_settings()
    if singular_tol is None:
        singular_tol = settings.singular_tol
    if workers is None:
        workers = settings.workers

    samples = sample_curve(curve, sampling, workers)
    roots = ordered_map(lambda s: solve_lambda(s, media, a, branches, tol), samples, workers)

    assembler = SheetAssembler(a=a, media=media)
    for sample, sample_roots in zip(samples, roots):
        assembler.add(
            sample.t,
            [(side_of(r.lam), _sheet_point(sample, r, media, a, singular_tol)) for r in sample_roots],
        )
    profile = assembler.finish()

    if profile.point_count() == 0:
        raise EmptyProfileError(f"no sheet point for a={a} on any of {len(samples)} samples")
    bound = (tol if tol is not None else settings.membership_tol) * membership_scale(a)
    worst = max(abs(p.residual) for s in profile.sheets.values() for p in s.points)
    logger.debug(
        f"profile a={a}: {len(profile.sheets)} sheets, {profile.point_count()} points, "
        f"max residual {worst:.3e} (bound {bound:.3e}), {len(profile.events)} events"
    )
    return profile


# ========= NUMERICAL TANGENTS =========

def polyline_derivative(points: np.ndarray, step: float) -> np.ndarray:
    """d/dt of equally spaced samples: 5-point central stencil inside, lower order at the ends."""
    count = len(points)
    out = np.full_like(points, np.nan, dtype=float)
    if count < 2 or step == 0.0:
        return out
    if count == 2:
        out[:] = (points[1] - points[0]) / step
        return out
    for i in range(count):
        if 2 <= i <= count - 3:
            out[i] = (-points[i + 2] + 8 * points[i + 1] - 8 * points[i - 1] + points[i - 2]) / (12 * step)
        elif 1 <= i <= count - 2:
            out[i] = (points[i + 1] - points[i - 1]) / (2 * step)
        elif i == 0:
            out[i] = (-3 * points[0] + 4 * points[1] - points[2]) / (2 * step)
        else:
            out[i] = (3 * points[-1] - 4 * points[-2] + points[-3]) / (2 * step)
    return out


def sheet_tangents(sheet: Sheet) -> np.ndarray:
    """Unit tangents of the sampled sheet, differentiated segment by segment."""
    tangents = np.full((len(sheet.points), 2), np.nan)
    for start, end in sheet.segment_bounds():
        segment = sheet.points[start:end]
        if len(segment) < 2:
            continue
        step = (segment[-1].sample.t - segment[0].sample.t) / (len(segment) - 1)
        derivative = polyline_derivative(np.array([p.y for p in segment]), step)
        lengths = np.hypot(derivative[:, 0], derivative[:, 1])
        with np.errstate(invalid="ignore", divide="ignore"):
            tangents[start:end] = derivative / lengths[:, None]
    return tangents
