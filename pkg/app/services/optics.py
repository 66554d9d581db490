# app/services/optics.py
"""Snell refraction and the ray-tracing oracles that cross-check constructed sheets.

Sheet normals come from differentiating the sampled sheets, never from the
oval equations the sheets were built with.
"""

import logging
import math
from functools import reduce
from typing import Callable, List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.optimize import brentq

from app.config import get_settings
from app.errors import DomainError, GeometryError, GeometryMismatchError, TotalInternalReflectionError
from app.models.geometry import Branch, Media, OvalSpec, Vec2, cross, left_normal, norm, unit
from app.models.optics import Exclusion, Ray, RayRecord, RefractionReport
from app.models.profile import Profile, Sheet, SheetKey, SheetPoint
from app.services.geom import Curve
from app.services.oval import bipolar_residual
from app.services.profile import polyline_derivative, sheet_point_at, sheet_tangents

logger = logging.getLogger(__name__)

UNIT_TOL = 1e-9


# ========= SNELL =========

def _require_unit(v: Vec2, name: str) -> None:
    if abs(norm(v) - 1.0) > UNIT_TOL:
        raise DomainError(f"{name} must be a unit vector, |{name}| = {norm(v)!r}")


def critical_angle(n_from: float, n_to: float) -> Optional[float]:
    if not (n_from > 0 and n_to > 0):
        raise DomainError(f"refractive indices must be positive, got {n_from}, {n_to}")
    if n_to < n_from:
        return math.asin(n_to / n_from)
    return None


def incidence_angle(direction: Vec2, normal: Vec2) -> float:
    return math.acos(min(1.0, abs(float(direction @ normal))))


def refract(direction: Vec2, normal: Vec2, n_from: float, n_to: float) -> Vec2:
    """Transmitted unit direction; the normal's orientation does not matter."""
    _require_unit(direction, "direction")
    _require_unit(normal, "normal")
    if not (n_from > 0 and n_to > 0):
        raise DomainError(f"refractive indices must be positive, got {n_from}, {n_to}")
    along = float(direction @ normal)
    tangential = (n_from / n_to) * (direction - along * normal)
    squared = float(tangential @ tangential)
    if squared > 1.0:
        raise TotalInternalReflectionError(
            incidence_angle(direction, normal), critical_angle(n_from, n_to) or math.pi / 2
        )
    return tangential + math.copysign(math.sqrt(1.0 - squared), along) * normal


def angle_between(u: Vec2, v: Vec2) -> float:
    return math.atan2(abs(cross(u, v)), float(u @ v))


def optical_path(y: Vec2, x: Vec2, media: Media) -> float:
    return media.n1 * norm(y) + media.n2 * norm(y - x)


# ========= SHARED HELPERS =========

def _excluded_near_flags(sheet: Sheet, margin: int) -> Set[int]:
    near: Set[int] = set()
    for index in sheet.flagged_indices():
        near.update(range(index - margin, index + margin + 1))
    return near


def _segment_edges(sheet: Sheet, width: int = 2) -> Set[int]:
    """Indices whose tangent falls back to a lower-order stencil."""
    edges: Set[int] = set()
    for start, end in sheet.segment_bounds():
        edges.update(range(start, min(start + width, end)))
        edges.update(range(max(end - width, start), end))
    return edges


def _same_side(u: Vec2, v: Vec2, normal: Vec2) -> bool:
    return (float(u @ normal) >= 0.0) == (float(v @ normal) >= 0.0)


def _check_source(profile: Profile, curve: Curve) -> None:
    """The profile's samples must come from `curve`."""
    for sheet in profile.sheets.values():
        if not sheet.points:
            continue
        sample = sheet.points[len(sheet.points) // 2].sample
        try:
            expected = curve.point(sample.t)
        except GeometryError as exc:
            raise GeometryMismatchError(f"profile sample t={sample.t} is outside the curve: {exc.detail}")
        if norm(expected - sample.point) > 1e-9 * (1.0 + norm(expected)):
            raise GeometryMismatchError(f"profile sample at t={sample.t} is not on the given wavefront")


def _trace_sheet(
    sheet: Sheet,
    margin: int,
    trace: Callable[[Sheet, SheetPoint, Vec2], RayRecord],
) -> List[RayRecord]:
    tangents = sheet_tangents(sheet)
    near = _excluded_near_flags(sheet, margin)
    edges = _segment_edges(sheet)
    records = []
    for index, point in enumerate(sheet.points):
        tangent = tangents[index]
        if index in near:
            records.append(RayRecord(sheet.key.label, point.sample.t, point.y, 0.0, excluded=Exclusion.SINGULAR))
        elif index in edges or not np.all(np.isfinite(tangent)):
            records.append(RayRecord(sheet.key.label, point.sample.t, point.y, 0.0, excluded=Exclusion.DEGENERATE))
        else:
            records.append(trace(sheet, point, left_normal(tangent)))
    return records


def _merged(
    check: str,
    reference: float,
    sheets: Sequence[Sheet],
    margin: int,
    trace: Callable[[Sheet, SheetPoint, Vec2], RayRecord],
) -> RefractionReport:
    per_sheet = (RefractionReport(check, _trace_sheet(s, margin, trace), reference) for s in sheets)
    return reduce(RefractionReport.merge, per_sheet, RefractionReport(check, reference_path=reference))


def _worst_note(report: RefractionReport) -> str:
    worst = report.worst()
    return "" if worst is None else f" ({worst.sheet} at t={worst.t:.6g})"


# ========= THEOREM ORACLES =========

def check_refraction_theorem(
    profile: Profile,
    curve: Curve,
    media: Media,
    margin: Optional[int] = None,
) -> RefractionReport:
    """Rays from F refracted at interior sheets should leave along the normals of W."""
    if profile.media != media:
        raise GeometryMismatchError(f"profile media {profile.media} differ from {media}")
    _check_source(profile, curve)
    if margin is None:
        margin = get_settings().singular_margin

    def trace(sheet: Sheet, point: SheetPoint, normal: Vec2) -> RayRecord:
        incoming = unit(point.y)
        target = unit(point.sample.point - point.y)
        incidence = incidence_angle(incoming, normal)
        base = dict(sheet=sheet.key.label, t=point.sample.t, y=point.y, incidence=incidence)
        try:
            out = refract(incoming, normal, media.n1, media.n2)
        except TotalInternalReflectionError:
            return RayRecord(**base, excluded=Exclusion.TIR)
        if not _same_side(target, incoming, normal):
            return RayRecord(**base, direction=out, excluded=Exclusion.WRONG_SIDE)
        return RayRecord(
            **base,
            deviation=angle_between(out, target),
            path=optical_path(point.y, point.sample.point, media),
            direction=out,
        )

    report = _merged("refraction", 2.0 * profile.a, profile.sheets_of(Branch.INTERIOR), margin, trace)
    logger.debug(
        f"refraction check a={profile.a}: {report.eligible_count} eligible, max deviation "
        f"{report.max_deviation:.3e}{_worst_note(report)}, {report.tir_count} tir, {report.wrong_side} wrong side"
    )
    return report


def check_virtual_source(
    profile: Profile,
    curve: Curve,
    media_swapped: Media,
    branch: Branch = Branch.EXTERIOR,
    front_facing_only: bool = False,
    reverse: bool = False,
    margin: Optional[int] = None,
) -> RefractionReport:
    """Normal rays of W arriving at a sheet should leave radially through F.

    Exterior sheets send them away from F (divergent, virtual source);
    interior sheets send them toward F. With `reverse`, radial rays are
    traced back into the normals of W.
    """
    if media_swapped != profile.media.swapped():
        raise GeometryMismatchError(
            f"swapped media {media_swapped} do not match profile media {profile.media}"
        )
    _check_source(profile, curve)
    if margin is None:
        margin = get_settings().singular_margin
    n_w, n_f = media_swapped.n1, media_swapped.n2
    radial_sense = 1.0 if branch is Branch.EXTERIOR else -1.0

    def trace(sheet: Sheet, point: SheetPoint, normal: Vec2) -> RayRecord:
        x = point.sample.point
        normal_ray = unit(point.y - x)
        radial = radial_sense * unit(point.y)
        if reverse:
            incoming, target, n_from, n_to = -radial, -normal_ray, n_f, n_w
        else:
            incoming, target, n_from, n_to = normal_ray, radial, n_w, n_f
        base = dict(sheet=sheet.key.label, t=point.sample.t, y=point.y, incidence=incidence_angle(incoming, normal))
        if front_facing_only and float(point.sample.normal @ point.y) <= 0.0:
            return RayRecord(**base, excluded=Exclusion.FILTERED)
        try:
            out = refract(incoming, normal, n_from, n_to)
        except TotalInternalReflectionError:
            return RayRecord(**base, excluded=Exclusion.TIR)
        if not _same_side(target, incoming, normal):
            return RayRecord(**base, direction=out, excluded=Exclusion.WRONG_SIDE)
        spec = OvalSpec(x=x, media=profile.media, a=profile.a)
        return RayRecord(
            **base,
            deviation=angle_between(out, target),
            path=bipolar_residual(point.y, spec, branch) + 2.0 * profile.a,
            direction=out,
        )

    report = _merged("virtual_source", 2.0 * profile.a, profile.sheets_of(branch), margin, trace)
    if front_facing_only and report.filtered:
        logger.warning(f"virtual source check: {report.filtered} points fail n(x).y > 0 and were filtered")
    logger.debug(
        f"virtual source check a={profile.a} ({branch.value}): {report.eligible_count} eligible, "
        f"max deviation {report.max_deviation:.3e}{_worst_note(report)}"
    )
    return report


# ========= DO-NOTHING =========

def _first_crossing(ray: Ray, sheets: Sequence[Sheet]) -> Optional[Tuple[Sheet, int, float]]:
    """Nearest crossing of a half-line with sheet polylines: (sheet, segment start, fraction)."""
    best: Optional[Tuple[float, Sheet, int, float]] = None
    for sheet in sheets:
        for start, end in sheet.segment_bounds():
            if end - start < 2:
                continue
            pts = np.array([p.y for p in sheet.points[start:end]])
            edges = pts[1:] - pts[:-1]
            rel = pts[:-1] - ray.origin
            denom = ray.dir[0] * edges[:, 1] - ray.dir[1] * edges[:, 0]
            with np.errstate(divide="ignore", invalid="ignore"):
                tau = (rel[:, 0] * edges[:, 1] - rel[:, 1] * edges[:, 0]) / denom
                frac = (rel[:, 0] * ray.dir[1] - rel[:, 1] * ray.dir[0]) / denom
            hits = np.flatnonzero(
                (denom != 0.0) & (tau > 1e-12) & (frac >= -1e-9) & (frac <= 1.0 + 1e-9)
            )
            for k in hits:
                if best is None or tau[k] < best[0]:
                    best = (float(tau[k]), sheet, start + int(k), float(np.clip(frac[k], 0.0, 1.0)))
    if best is None:
        return None
    _, sheet, index, frac = best
    return sheet, index, frac


def _exact_sheet_normal(
    curve: Curve,
    media: Media,
    a: float,
    key: SheetKey,
    t: float,
    hint: float,
    h: float = 1e-4,
) -> Optional[Vec2]:
    stencil = []
    for offset in (-2, -1, 0, 1, 2):
        try:
            point = sheet_point_at(curve, media, a, key, t + offset * h, hint)
        except GeometryError:
            return None
        if point is None:
            return None
        stencil.append(point.y)
    derivative = polyline_derivative(np.array(stencil), h)[2]
    if norm(derivative) == 0.0:
        return None
    return left_normal(unit(derivative))


def _locate_on_sheet(
    curve: Curve,
    media: Media,
    a: float,
    sheet: Sheet,
    index: int,
    frac: float,
    ray: Ray,
) -> SheetPoint:
    lo, hi = sheet.points[index], sheet.points[index + 1]

    def hint_at(t: float) -> float:
        span = hi.sample.t - lo.sample.t
        w = (t - lo.sample.t) / span if span else 0.0
        return lo.lam + w * (hi.lam - lo.lam)

    def exact(t: float) -> SheetPoint:
        found = sheet_point_at(curve, media, a, sheet.key, t, hint_at(t))
        if found is None:
            raise GeometryMismatchError(f"sheet {sheet.key.label} vanishes at t={t} inside a sampled segment")
        return found

    def miss(t: float) -> float:
        return cross(exact(t).y - ray.origin, ray.dir)

    t_lo, t_hi = lo.sample.t, hi.sample.t
    if miss(t_lo) * miss(t_hi) <= 0.0:
        t_star = brentq(miss, t_lo, t_hi, xtol=1e-15 * (1.0 + abs(t_hi)), rtol=4 * np.finfo(float).eps)
    else:
        t_star = t_lo + frac * (t_hi - t_lo)
    return exact(t_star)


def check_do_nothing(
    inner: Profile,
    outer: Profile,
    curve: Curve,
    media: Media,
    trace_media: Optional[Media] = None,
    margin: Optional[int] = None,
) -> RefractionReport:
    """Rays from F through an interior sheet and then an exterior sheet should leave radially.

    `trace_media` replaces the indices used while tracing (the sheets stay
    those of `media`); equal indices make both interfaces transparent.
    """
    if inner.a != outer.a or inner.media != media or outer.media != media:
        raise GeometryMismatchError("do-nothing sheets must share a and media")
    _check_source(inner, curve)
    if margin is None:
        margin = get_settings().singular_margin
    trace = trace_media or media
    physical = trace == media
    a = inner.a
    outer_sheets = outer.sheets_of(Branch.EXTERIOR)
    report = RefractionReport("do_nothing", reference_path=4.0 * a if physical else None)

    for sheet in inner.sheets_of(Branch.INTERIOR):
        tangents = sheet_tangents(sheet)
        near = _excluded_near_flags(sheet, margin)
        edges = _segment_edges(sheet)
        for index, first in enumerate(sheet.points):
            base = dict(sheet=sheet.key.label, t=first.sample.t, y=first.y)
            if index in near:
                report.records.append(RayRecord(**base, incidence=0.0, excluded=Exclusion.SINGULAR))
                continue
            if index in edges or not np.all(np.isfinite(tangents[index])):
                report.records.append(RayRecord(**base, incidence=0.0, excluded=Exclusion.DEGENERATE))
                continue
            normal = left_normal(tangents[index])
            incoming = unit(first.y)
            incidence = incidence_angle(incoming, normal)
            try:
                middle = refract(incoming, normal, trace.n1, trace.n2)
            except TotalInternalReflectionError:
                report.records.append(RayRecord(**base, incidence=incidence, excluded=Exclusion.TIR))
                continue
            if physical and not _same_side(unit(first.sample.point - first.y), incoming, normal):
                report.records.append(RayRecord(**base, incidence=incidence, excluded=Exclusion.WRONG_SIDE))
                continue

            ray = Ray(origin=first.y, dir=middle)
            crossing = _first_crossing(ray, outer_sheets)
            if crossing is None:
                raise GeometryMismatchError(
                    f"ray from {sheet.key.label} at t={first.sample.t} misses every exterior sheet"
                )
            hit_sheet, hit_index, frac = crossing
            second = _locate_on_sheet(curve, media, a, hit_sheet, hit_index, frac, ray)
            second_normal = _exact_sheet_normal(curve, media, a, hit_sheet.key, second.sample.t, second.lam)
            if second_normal is None:
                report.records.append(RayRecord(**base, incidence=incidence, excluded=Exclusion.DEGENERATE))
                continue
            radial = unit(second.y)
            try:
                out = refract(middle, second_normal, trace.n2, trace.n1)
            except TotalInternalReflectionError:
                report.records.append(RayRecord(**base, incidence=incidence, excluded=Exclusion.TIR))
                continue
            if physical and not _same_side(radial, middle, second_normal):
                report.records.append(RayRecord(**base, incidence=incidence, excluded=Exclusion.WRONG_SIDE))
                continue
            path = trace.n1 * norm(first.y) + trace.n2 * norm(second.y - first.y) - trace.n1 * norm(second.y)
            report.records.append(RayRecord(
                **base,
                incidence=incidence,
                deviation=angle_between(out, radial),
                path=path,
                direction=out,
            ))

    logger.debug(
        f"do-nothing check a={a}: {report.eligible_count} eligible, "
        f"max deviation {report.max_deviation:.3e}{_worst_note(report)}"
    )
    return report
