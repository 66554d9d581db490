# app/services/pipeline.py
"""Runs the tasks of one scene and collects the validation summary."""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from app import __version__
from app.errors import EmptyBranchError, RefractorError, ValidationFailedError
from app.models.caustic import CausticCurve, Region
from app.models.geometry import ALL_BRANCHES, Branch, Media, OvalSpec, Sampling, norm
from app.models.profile import EventKind, Profile
from app.schemas.scene import Scene, Task
from app.schemas.summary import CheckResult, ValidationSummary
from app.services import export, render
from app.services.caustic import (
    caustic_curve,
    containment_report,
    profile_from_caustic,
    region_of,
    sweep_parameters,
)
from app.services.export import OvalRecord
from app.services.geom import Curve, sample_curve
from app.services.optics import check_do_nothing, check_refraction_theorem, check_virtual_source
from app.services.oval import bipolar_residual, membership_scale, oval_polyline, polar_radii
from app.services.profile import build_profile
from app.services.scene_loader import build_curve, build_media, build_sampling

logger = logging.getLogger(__name__)


def _a_tag(a: float) -> str:
    return f"{a:g}"


class SceneRun:
    """State shared by the tasks of one scene run."""

    def __init__(self, scene: Scene, out_dir: Optional[Path]):
        self.scene = scene
        self.out_dir = out_dir
        self.curve: Curve = build_curve(scene)
        self.media: Media = build_media(scene)
        self.sampling: Sampling = build_sampling(scene, self.curve)
        self.tol = scene.tolerances
        self.profiles: Dict[float, Profile] = {}
        self.ovals: Dict[float, List[OvalRecord]] = {}
        self.caustic: Optional[CausticCurve] = None
        self.reconstructions: Dict[Tuple[float, Region], Profile] = {}
        self.ray_records: list = []
        self.checks: List[CheckResult] = []
        self.artifacts: List[str] = []
        self._wavefront_points = np.array([s.point for s in sample_curve(self.curve, self.sampling)])

    # ----- helpers -----

    @property
    def writing(self) -> bool:
        return self.out_dir is not None

    def _record(self, path: Path) -> None:
        self.artifacts.append(path.relative_to(self.out_dir).as_posix())

    def _figure(self, title: str) -> render.Figure:
        figure = render.Figure(self.scene.render, self.scene.translation, title)
        render.add_wavefront(figure, self._wavefront_points)
        return figure

    def _save(self, figure: render.Figure, name: str) -> None:
        if self.writing:
            self._record(figure.save(self.out_dir / name))

    def profile(self, a: float) -> Profile:
        if a not in self.profiles:
            self.profiles[a] = build_profile(
                self.curve,
                self.media,
                a,
                self.sampling,
                tol=self.tol.membership,
                singular_tol=self.tol.singular,
            )
        return self.profiles[a]

    def caustic_points(self) -> CausticCurve:
        if self.caustic is None:
            self.caustic = caustic_curve(self.curve, self.sampling, flat=self.tol.flat_curvature)
        return self.caustic

    # ----- tasks -----

    def task_ovals(self, a: float) -> None:
        grid = self.sampling.grid()
        picks = np.unique(np.linspace(0, len(grid) - 1, min(self.scene.sampling.oval_foci, len(grid))).round())
        records: List[OvalRecord] = []
        worst = 0.0
        phis = np.linspace(0.0, 2.0 * np.pi, self.scene.sampling.phi_resolution, endpoint=False)
        for focus_index, k in enumerate(picks.astype(int)):
            t = float(grid[k])
            spec = OvalSpec(x=self.curve.point(t), media=self.media, a=a)
            for branch in ALL_BRANCHES:
                try:
                    vertices = oval_polyline(spec, branch, self.scene.sampling.oval_resolution, self.tol.membership)
                except EmptyBranchError:
                    continue
                records.append((focus_index, t, branch, vertices))
                for vertex in vertices:
                    worst = max(worst, abs(bipolar_residual(vertex, spec, branch)))
            axis = spec.x / norm(spec.x)
            theta = np.arctan2(axis[1], axis[0])
            for phi in phis:
                direction = np.array([np.cos(phi + theta), np.sin(phi + theta)])
                for r, branch in polar_radii(spec, float(phi), self.tol.membership, ALL_BRANCHES):
                    worst = max(worst, abs(bipolar_residual(r * direction, spec, branch)))
        self.ovals[a] = records
        self.checks.append(CheckResult(
            name="oval_membership",
            a=a,
            measured=worst / membership_scale(a),
            threshold=self.tol.membership,
            eligible=sum(len(v) for _, _, _, v in records),
        ))

    def task_profile(self, a: float) -> None:
        profile = self.profile(a)
        worst = max(abs(p.residual) for s in profile.sheets.values() for p in s.points)
        self.checks.append(CheckResult(
            name="membership",
            a=a,
            measured=worst / membership_scale(a),
            threshold=self.tol.membership,
            eligible=profile.point_count(),
        ))
        if not self.writing:
            return
        for key, sheet in profile.sheets.items():
            self._record(export.write_sheet(sheet, self.out_dir / f"profile_a{_a_tag(a)}_{key.label}.csv"))
        figure = self._figure(f"R^a sheets, a={a:g}")
        if a in self.ovals:
            render.add_ovals(figure, self.ovals[a])
        render.add_profile(figure, profile)
        self._save(figure, f"profile_a{_a_tag(a)}.svg")

    def task_caustic(self) -> None:
        caustic = self.caustic_points()
        worst = 0.0
        picks = caustic.points[:: max(1, len(caustic.points) // 100)]
        for cp in picks:
            sweep = sweep_parameters(cp, self.media)
            for value in (sweep.a1, sweep.a2):
                spec = OvalSpec(x=cp.x, media=self.media, a=value)
                residual = min(abs(bipolar_residual(cp.c, spec, b)) for b in ALL_BRANCHES)
                worst = max(worst, residual / membership_scale(value))
        self.checks.append(CheckResult(
            name="caustic_sweep",
            measured=worst,
            threshold=self.tol.membership,
            eligible=len(picks),
            reported={"flat_gaps": float(len(caustic.gaps))},
        ))
        if not self.writing:
            return
        self._record(export.write_caustic(caustic.points, self.media, self.out_dir / "caustic.csv"))
        figure = self._figure("caustic and sweep")
        if self.media.n1 != self.media.n2:
            for a in self.scene.a:
                render.add_profile(figure, self.profile(a))
        render.add_caustic(figure, caustic)
        self._save(figure, "caustic.svg")

    def _regions(self) -> List[Region]:
        if self.scene.region is not None:
            return [self.scene.region]
        present = {region_of(cp) for cp in self.caustic_points()}
        return [r for r in Region if r in present]

    def task_reconstruct(self, a: float) -> None:
        caustic = self.caustic_points()
        profile = self.profile(a)
        figure = self._figure(f"reconstruction from the caustic, a={a:g}")
        render.add_caustic(figure, caustic)
        for region in self._regions():
            rebuilt = profile_from_caustic(caustic.points, self.media, a, region, self.tol.membership)
            self.reconstructions[(a, region)] = rebuilt
            report = containment_report(profile, rebuilt, region=region)
            collinear = 0.0
            for sheet in rebuilt.sheets.values():
                for p in sheet.points:
                    c = p.sample.point + p.sample.normal / p.sample.curvature
                    leg_y, leg_c = p.y - p.sample.point, c - p.sample.point
                    scale = norm(leg_y) * norm(leg_c)
                    if scale > 0:
                        collinear = max(collinear, abs(leg_y[0] * leg_c[1] - leg_y[1] * leg_c[0]) / scale)
            self.checks.append(CheckResult(
                name=f"reconstruction_{region.value}",
                a=a,
                measured=report.relative_forward,
                threshold=self.scene.thresholds.hausdorff,
                eligible=rebuilt.point_count(),
                reported={
                    "forward": report.forward,
                    "reverse": report.reverse,
                    "diameter": report.diameter,
                    "collinearity": collinear,
                    "containment_events": float(
                        sum(1 for e in rebuilt.events if e.kind is EventKind.CONTAINMENT)
                    ),
                    **{f"forward.{label}": s.forward for label, s in report.sheets.items()},
                },
            ))
            if self.writing:
                for key, sheet in rebuilt.sheets.items():
                    name = f"reconstruct_a{_a_tag(a)}_{region.value}_{key.label}.csv"
                    self._record(export.write_sheet(sheet, self.out_dir / name))
                render.add_profile(figure, rebuilt, prefix=f"reconstruct-{region.value}")
        self._save(figure, f"reconstruct_a{_a_tag(a)}.svg")

    def _check(self, name: str, a: float, report, threshold: float, measured: float) -> CheckResult:
        return CheckResult(
            name=name,
            a=a,
            measured=measured,
            threshold=threshold,
            eligible=report.eligible_count,
            tir_excluded=report.tir_count,
            singular_excluded=report.singular_excluded,
            wrong_side=report.wrong_side,
            filtered=report.filtered,
        )

    def task_validate(self, a: float) -> None:
        profile = self.profile(a)
        options = self.scene.validation
        thresholds = self.scene.thresholds
        margin = self.tol.singular_margin
        if options.refraction:
            report = check_refraction_theorem(profile, self.curve, self.media, margin)
            self.ray_records.extend(report.records)
            self.checks.append(self._check("refraction", a, report, thresholds.deviation, report.max_deviation))
            self.checks.append(self._check(
                "fermat", a, report, thresholds.path * membership_scale(a), report.path_spread
            ))
        if options.virtual_source:
            report = check_virtual_source(
                profile,
                self.curve,
                self.media.swapped(),
                branch=options.virtual_source_branch,
                front_facing_only=options.front_facing_only,
                margin=margin,
            )
            self.checks.append(self._check("virtual_source", a, report, thresholds.deviation, report.max_deviation))
        if options.do_nothing and profile.sheets_of(Branch.EXTERIOR) and profile.sheets_of(Branch.INTERIOR):
            report = check_do_nothing(profile, profile, self.curve, self.media, margin=margin)
            self.checks.append(self._check("do_nothing", a, report, thresholds.deviation, report.max_deviation))

    def task_validation_figure(self) -> None:
        figure = self._figure("validation rays")
        for a in self.scene.a:
            render.add_profile(figure, self.profile(a))
        span = np.ptp(self._wavefront_points, axis=0)
        render.add_rays(figure, self.ray_records, self.scene.render.rays, float(np.hypot(*span)) or 1.0)
        self._save(figure, "validation.svg")

    def task_render(self) -> None:
        figure = self._figure("composite")
        for a in self.scene.a:
            if a in self.ovals:
                render.add_ovals(figure, self.ovals[a])
        for a in self.scene.a:
            profile = self.profile(a)
            render.add_profile(figure, profile)
            if self.scene.render.revolve:
                middle = self.curve.point(0.5 * (self.sampling.t0 + self.sampling.t1))
                render.add_revolved(figure, profile, middle)
        caustic = self.caustic if self.caustic is not None else self.caustic_points()
        render.add_caustic(figure, caustic)
        span = np.ptp(self._wavefront_points, axis=0)
        render.add_rays(figure, self.ray_records, self.scene.render.rays, float(np.hypot(*span)) or 1.0)
        self._save(figure, "composite.svg")

    # ----- driver -----

    def _guarded(self, task: Task, a: Optional[float], step) -> None:
        context = f"task {task.value}" + (f", a={a:g}" if a is not None else "")
        logger.info(f"Running {context}")
        try:
            step()
        except RefractorError as exc:
            raise exc.with_context(context)

    def execute(self, tasks: List[Task]) -> ValidationSummary:
        for task in tasks:
            if task is Task.OVALS:
                for a in self.scene.a:
                    self._guarded(task, a, lambda a=a: self.task_ovals(a))
                if self.writing:
                    self._record(export.write_ovals(self.ovals, self.out_dir / "ovals.csv"))
                    figure = self._figure("ovals")
                    for records in self.ovals.values():
                        render.add_ovals(figure, records)
                    self._save(figure, "ovals.svg")
            elif task is Task.PROFILE:
                for a in self.scene.a:
                    self._guarded(task, a, lambda a=a: self.task_profile(a))
            elif task is Task.CAUSTIC:
                self._guarded(task, None, self.task_caustic)
            elif task is Task.RECONSTRUCT:
                for a in self.scene.a:
                    self._guarded(task, a, lambda a=a: self.task_reconstruct(a))
            elif task is Task.VALIDATE:
                for a in self.scene.a:
                    self._guarded(task, a, lambda a=a: self.task_validate(a))
                if self.writing:
                    self._guarded(task, None, self.task_validation_figure)
            elif task is Task.RENDER and self.writing:
                self._guarded(task, None, self.task_render)

        events = [e for p in self.profiles.values() for e in p.events]
        return ValidationSummary(
            scene=self.scene.name,
            version=__version__,
            tasks=[t.value for t in tasks],
            checks=self.checks,
            gap_points=sum(1 for e in events if e.kind is EventKind.GAP),
            events=len(events),
            artifacts=self.artifacts,
        )


def run(scene: Scene, out_dir: Optional[Path] = None, only: Optional[Task] = None) -> ValidationSummary:
    """Run the scene's tasks, write artifacts under `out_dir` (if given) and summary.json.

    Raises ValidationFailedError after the summary is written when a check fails.
    """
    tasks = [only] if only is not None else list(scene.tasks)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    summary = SceneRun(scene, out_dir).execute(tasks)
    if out_dir is not None:
        path = out_dir / "summary.json"
        path.write_text(summary.model_dump_json(indent=2), encoding="utf-8")
        logger.info(f"Wrote {path}")
    logger.info(f"Scene {scene.name or ''}: {len(summary.checks)} checks, passed={summary.passed}")
    if not summary.passed:
        raise ValidationFailedError(summary.failed())
    return summary


def summarize(scene: Scene) -> ValidationSummary:
    """Run every task in memory and return the summary without raising on failed checks."""
    return SceneRun(scene, None).execute(list(scene.tasks))
