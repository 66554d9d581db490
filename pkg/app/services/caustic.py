# app/services/caustic.py
"""Caustic of W, the parameters whose profiles sweep it, and profiles rebuilt from it."""

import logging
import math
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from app.config import get_settings
from app.errors import DegenerateCausticError, DomainError, EmptyProfileError, FlatPointError
from app.models.caustic import (
    CausticCurve,
    CausticGap,
    CausticPoint,
    ContainmentReport,
    ReconstructionParams,
    Region,
    SheetContainment,
    SweepParams,
)
from app.models.geometry import (
    ALL_BRANCHES,
    DEFAULT_BRANCHES,
    Branch,
    Media,
    OvalSpec,
    Sampling,
    WavefrontSample,
    norm,
)
from app.models.profile import EventKind, Family, Profile, SheetEvent, SheetKey, SheetPoint
from app.services.executor import ordered_map
from app.services.geom import Curve, sample_curve
from app.services.oval import bipolar_residual
from app.services.profile import SheetAssembler, is_singular, side_of, solve_lambda

logger = logging.getLogger(__name__)


def caustic_point(sample: WavefrontSample, flat: Optional[float] = None) -> CausticPoint:
    if flat is None:
        flat = get_settings().flat_curvature
    if abs(sample.curvature) <= flat:
        raise FlatPointError(
            f"curvature {sample.curvature:.3e} at t={sample.t} is below {flat:.1e}; centre at infinity"
        )
    rho = 1.0 / sample.curvature
    return CausticPoint(c=sample.point + rho * sample.normal, source=sample, rho=rho)


def caustic_curve(
    curve: Curve,
    sampling: Sampling,
    flat: Optional[float] = None,
    workers: Optional[int] = None,
) -> CausticCurve:
    settings = get_settings()
    if flat is None:
        flat = settings.flat_curvature
    if workers is None:
        workers = settings.workers

    result = CausticCurve()
    run: List[float] = []
    for sample in sample_curve(curve, sampling, workers):
        if abs(sample.curvature) <= flat:
            run.append(sample.t)
            continue
        if run:
            result.gaps.append(CausticGap(run[0], run[-1], "flat"))
            run = []
        result.points.append(caustic_point(sample, flat))
    if run:
        result.gaps.append(CausticGap(run[0], run[-1], "flat"))
    logger.debug(f"caustic: {len(result.points)} points, {len(result.gaps)} flat gaps")
    return result


def sweep_parameters(cp: CausticPoint, media: Media) -> SweepParams:
    """The two values of a for which c is a singular point of R^a."""
    to_focus = media.n1 * norm(cp.c)
    to_source = media.n2 * norm(cp.c - cp.x)
    return SweepParams(a1=abs(to_focus + to_source) / 2.0, a2=abs(to_focus - to_source) / 2.0)


def reconstruction_params(a: float, rho: float, n2: float) -> ReconstructionParams:
    if a < 0:
        raise DomainError(f"oval parameter a must be non-negative, got {a}")
    half = abs(rho) * n2 / 2.0
    return ReconstructionParams(a_prime=a + half, a_dblprime=abs(a - half))


def region_of_sample(sample: WavefrontSample) -> Optional[Region]:
    """None at flat points and where W's normal line passes through F."""
    facing = sample.curvature * float(sample.point @ sample.normal)
    if facing > 0.0:
        return Region.CONVEX
    if facing < 0.0:
        return Region.CONCAVE
    return None


def region_of(cp: CausticPoint) -> Optional[Region]:
    return region_of_sample(cp.source)


def _scene_diameter(*clouds: np.ndarray) -> float:
    stacked = np.vstack([c for c in clouds if len(c)] or [np.zeros((1, 2))])
    stacked = np.vstack([stacked, np.zeros((1, 2))])
    span = stacked.max(axis=0) - stacked.min(axis=0)
    return float(np.hypot(span[0], span[1]))


def check_non_degenerate(points: Sequence[CausticPoint], collapse: float = 1e-6) -> None:
    """Each caustic point must come from a single point of W.

    Two samples coincide when their centres are within 1e-9 of the scene
    diameter and closer than `collapse` times the distance of their sources.
    A cusp folds the caustic onto itself in isolated pairs; three or more
    mutually coincident samples mean a stretch of W shares one centre.
    """
    if len(points) < 3:
        return
    cs = np.array([p.c for p in points])
    xs = np.array([p.x for p in points])
    tol = 1e-9 * _scene_diameter(cs, xs)
    pairs = np.array(sorted(cKDTree(cs).query_pairs(r=tol)), dtype=int).reshape(-1, 2)
    if len(pairs) == 0:
        return
    gap_c = np.hypot(*(cs[pairs[:, 0]] - cs[pairs[:, 1]]).T)
    gap_x = np.hypot(*(xs[pairs[:, 0]] - xs[pairs[:, 1]]).T)
    pairs = pairs[(gap_x > tol) & (gap_c <= collapse * gap_x)]
    if len(pairs) == 0:
        return
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(len(points), len(points)))
    _, labels = connected_components(graph, directed=False)
    sizes = np.bincount(labels)
    worst = int(np.argmax(sizes))
    if sizes[worst] >= 3:
        members = np.flatnonzero(labels == worst)
        raise DegenerateCausticError(
            f"caustic point {cs[members[0]].tolist()} is shared by {sizes[worst]} samples "
            f"from t={points[members[0]].source.t} to t={points[members[-1]].source.t}"
        )


def caustic_family(branch: Branch, lam: float, rho: float, a: float, n2: float) -> Optional[Tuple[Family, Branch]]:
    """Family and branch of the oval with foci F and c through y = x + lam n.

    y lies on `branch` of the oval with foci F and x; c = x + rho n. Against
    c the term |y - x| grows by |rho| when x sits between y and c and shrinks
    by |rho| otherwise, which moves y onto O_c^{a'} or O_c^{a''}. None when
    no point of `branch` can sit at that position.
    """
    lifted = a >= 0.5 * n2 * abs(rho)
    if lam * rho <= 0.0:
        table = {
            Branch.INTERIOR: (Family.PRIME, Branch.INTERIOR),
            Branch.EXTERIOR: (Family.PRIME, Branch.EXTERIOR),
            Branch.REVERSED: (Family.DOUBLE_PRIME, Branch.REVERSED if lifted else Branch.EXTERIOR),
        }
    elif abs(lam) >= abs(rho):  # beyond the caustic
        table = {
            Branch.INTERIOR: (Family.DOUBLE_PRIME, Branch.INTERIOR) if lifted else None,
            Branch.EXTERIOR: (Family.DOUBLE_PRIME, Branch.EXTERIOR if lifted else Branch.REVERSED),
            Branch.REVERSED: (Family.PRIME, Branch.REVERSED),
        }
    else:  # between x and c
        table = {
            Branch.INTERIOR: (Family.DOUBLE_PRIME, Branch.REVERSED if lifted else Branch.EXTERIOR),
            Branch.EXTERIOR: (Family.DOUBLE_PRIME, Branch.INTERIOR) if a <= 0.5 * n2 * abs(rho) else None,
            Branch.REVERSED: (Family.PRIME, Branch.INTERIOR),
        }
    return table[branch]


def _reconstruct_at(
    cp: CausticPoint,
    media: Media,
    a: float,
    branches: Sequence[Branch],
    tol: Optional[float],
    singular_tol: float,
) -> List[Tuple[Family, int, Branch, SheetPoint]]:
    """Roots on O_c^{a'} and O_c^{a''} that lie on one of `branches` of R^a."""
    params = reconstruction_params(a, cp.rho, media.n2)
    virtual = cp.source.with_point(cp.c)
    entries = []
    for family, a_family in ((Family.PRIME, params.a_prime), (Family.DOUBLE_PRIME, params.a_dblprime)):
        spec = OvalSpec(x=cp.c, media=media, a=a_family)
        for root in solve_lambda(virtual, media, a_family, ALL_BRANCHES, tol):
            lam = cp.rho + root.lam
            source_branch = next(
                (b for b in branches if caustic_family(b, lam, cp.rho, a, media.n2) == (family, root.branch)),
                None,
            )
            if source_branch is None:
                continue
            y = cp.c + root.lam * cp.source.normal
            entries.append((
                family,
                side_of(root.lam),
                source_branch,
                SheetPoint(
                    sample=cp.source,
                    lam=lam,
                    y=y,
                    branch=root.branch,
                    residual=bipolar_residual(y, spec, root.branch),
                    singular=is_singular(cp.source, lam, singular_tol),
                    grazing=root.grazing,
                ),
            ))
    return entries


def profile_from_caustic(
    caustic: Iterable[CausticPoint],
    media: Media,
    a: float,
    region: Region,
    tol: Optional[float] = None,
    workers: Optional[int] = None,
    branches: Sequence[Branch] = DEFAULT_BRANCHES,
) -> Profile:
    """Sheets of the families O_c^{a'} and O_c^{a''} along the normal lines through x and c.

    Only roots that also lie on one of `branches` of R^a are kept, each on
    the family and branch `caustic_family` assigns it. Caustic points of the
    other region, and normal lines through F, are recorded as gaps.
    """
    media.require_distinct()
    settings = get_settings()
    if workers is None:
        workers = settings.workers
    points = list(caustic)
    check_non_degenerate(points)

    def reconstruct(cp: CausticPoint):
        if region_of(cp) is not region:
            return None
        return _reconstruct_at(cp, media, a, branches, tol, settings.singular_tol)

    per_point = ordered_map(reconstruct, points, workers)

    assemblers = {
        family: SheetAssembler(a=a, media=media, family=family)
        for family in (Family.PRIME, Family.DOUBLE_PRIME)
    }
    containment: List[SheetEvent] = []
    for cp, entries in zip(points, per_point):
        t = cp.source.t
        if entries is None:
            for assembler in assemblers.values():
                assembler.skip(t, f"outside {region.value} region")
            continue
        for family, assembler in assemblers.items():
            assembler.add(t, [(side, p) for f, side, _, p in entries if f is family])
        if region is Region.CONVEX:
            reach = abs(cp.rho)
            for family, side, source_branch, p in entries:
                if source_branch is Branch.INTERIOR and norm(p.y - cp.c) <= reach:
                    containment.append(SheetEvent(
                        t,
                        EventKind.CONTAINMENT,
                        SheetKey(p.branch, side, family=family),
                        f"|y-c|={norm(p.y - cp.c):.6g} <= |x-c|={reach:.6g}",
                    ))

    if containment:
        logger.warning(
            f"reconstruction a={a}: {len(containment)} refracting points not beyond the caustic "
            f"(first at t={containment[0].t})"
        )

    sheets = {}
    events: List[SheetEvent] = []
    for assembler in assemblers.values():
        partial = assembler.finish()
        sheets.update(partial.sheets)
        events.extend(partial.events)
    events.extend(containment)
    profile = Profile(
        a=a,
        media=media,
        sheets=dict(sorted(sheets.items(), key=lambda item: item[0].sort_key)),
        events=sorted(events, key=lambda e: e.t),
    )
    if profile.point_count() == 0:
        raise EmptyProfileError(f"no reconstructed point for a={a} in the {region.value} region")
    logger.debug(f"reconstruction a={a} ({region.value}): {len(sheets)} sheets, {profile.point_count()} points")
    return profile


def _target_label(target: Tuple[Family, Branch]) -> str:
    return f"{target[0].value}/{target[1].value}"


def containment_report(
    profile: Profile,
    reconstruction: Profile,
    keys: Optional[Sequence[SheetKey]] = None,
    region: Optional[Region] = None,
) -> ContainmentReport:
    """Distances between profile sheets and the reconstruction, sheet by sheet.

    Each profile point is measured against the reconstructed sheets of the
    family and branch `caustic_family` assigns it, never the whole union.
    With `region`, only profile points whose sample lies in that region count.
    """
    parts: Dict[Tuple[Family, Branch], List[np.ndarray]] = {}
    for key, sheet in reconstruction.sheets.items():
        if len(sheet):
            parts.setdefault((key.family, key.branch), []).append(sheet.positions())
    trees = {target: cKDTree(np.vstack(clouds)) for target, clouds in parts.items()}

    measured: List[np.ndarray] = []
    per_sheet: Dict[str, SheetContainment] = {}
    for key, sheet in profile.sheets.items():
        if keys is not None and key not in keys:
            continue
        grouped: Dict[Tuple[Family, Branch], List[np.ndarray]] = {}
        for p in sheet.points:
            if p.sample.curvature == 0.0:
                continue
            sample_region = region_of_sample(p.sample)
            if sample_region is None or (region is not None and sample_region is not region):
                continue
            target = caustic_family(p.branch, p.lam, 1.0 / p.sample.curvature, profile.a, profile.media.n2)
            if target is None:
                continue
            grouped.setdefault(target, []).append(p.y)
        if not grouped:
            continue
        forward = 0.0
        for target, ys in grouped.items():
            ys = np.array(ys)
            measured.append(ys)
            tree = trees.get(target)
            forward = max(forward, float(tree.query(ys)[0].max()) if tree is not None else math.inf)
        per_sheet[key.label] = SheetContainment(
            sheet=key.label,
            targets=tuple(sorted(_target_label(t) for t in grouped)),
            forward=forward,
            count=sum(len(ys) for ys in grouped.values()),
        )

    theirs = np.vstack([c for clouds in parts.values() for c in clouds] or [np.empty((0, 2))])
    if not measured or len(theirs) == 0:
        raise EmptyProfileError("containment needs points on both sides")
    ours = np.vstack(measured)
    reverse, _ = cKDTree(ours).query(theirs)
    return ContainmentReport(
        forward=max(s.forward for s in per_sheet.values()),
        reverse=float(reverse.max()),
        diameter=_scene_diameter(ours, theirs),
        region=region,
        sheets=per_sheet,
    )
