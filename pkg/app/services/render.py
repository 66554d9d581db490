# app/services/render.py
"""SVG figures.

Everything is drawn in the F-centred computation frame inside one root group
whose transform flips y and re-applies the scene translation. The viewBox is
the bounding box of everything drawn plus a 5% margin. Layers are stacked
wavefront, ovals, sheets, caustic, rays, markers.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np
import svgwrite

from app.models.caustic import CausticCurve
from app.models.geometry import Branch
from app.models.optics import RayRecord
from app.models.profile import Profile
from app.schemas.scene import RenderOptions

logger = logging.getLogger(__name__)

LAYERS = ("wavefront", "ovals", "sheets", "caustic", "rays", "markers")
MARGIN = 0.05
WIDTH_PX = 800


def _fmt(value: float) -> str:
    if value == 0.0 or abs(value) < 1e-12:
        return "0"
    return f"{value:.9g}"


def _path_data(points: np.ndarray, closed: bool = False) -> str:
    head, *rest = [f"{_fmt(x)},{_fmt(y)}" for x, y in points]
    d = "M" + head + "".join(" L" + p for p in rest)
    return d + " Z" if closed else d


@dataclass
class _Primitive:
    layer: str
    kind: str
    points: np.ndarray
    color: str
    css_class: str
    element_id: Optional[str] = None
    closed: bool = False


@dataclass
class Figure:
    options: RenderOptions
    translation: Tuple[float, float] = (0.0, 0.0)
    title: str = ""
    primitives: List[_Primitive] = field(default_factory=list)

    def color(self, key: str) -> str:
        return self.options.colors.get(key, "#000000")

    def polyline(
        self,
        layer: str,
        points: np.ndarray,
        color_key: str,
        css_class: str,
        element_id: Optional[str] = None,
        closed: bool = False,
    ) -> None:
        points = np.asarray(points, dtype=float)
        points = points[np.all(np.isfinite(points), axis=1)] if len(points) else points
        if len(points) < 2:
            return
        self.primitives.append(
            _Primitive(layer, "path", points, self.color(color_key), css_class, element_id, closed)
        )

    def cross(self, point: np.ndarray, css_class: str = "singular", color_key: str = "singular") -> None:
        self.primitives.append(
            _Primitive("markers", "cross", np.asarray([point], dtype=float), self.color(color_key), css_class)
        )

    def dot(self, point: np.ndarray, css_class: str = "source", color_key: str = "source") -> None:
        self.primitives.append(
            _Primitive("markers", "dot", np.asarray([point], dtype=float), self.color(color_key), css_class)
        )

    def bounds(self) -> Tuple[float, float, float, float]:
        clouds = [p.points for p in self.primitives] + [np.zeros((1, 2))]
        stacked = np.vstack(clouds)
        lo, hi = stacked.min(axis=0), stacked.max(axis=0)
        span = np.maximum(hi - lo, 1e-9)
        lo, hi = lo - MARGIN * span, hi + MARGIN * span
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    def drawing(self) -> svgwrite.Drawing:
        min_x, min_y, max_x, max_y = self.bounds()
        tx, ty = self.translation
        width, height = max_x - min_x, max_y - min_y
        marker = 0.01 * math.hypot(width, height)
        stroke = self.options.stroke_width * max(width, height) / 10.0

        dwg = svgwrite.Drawing(
            size=(f"{WIDTH_PX}px", f"{max(1, round(WIDTH_PX * height / width))}px"),
            profile="full",
            debug=False,
        )
        # viewBox in flipped scene coordinates
        dwg.viewbox(_fmt(min_x + tx), _fmt(-(max_y + ty)), _fmt(width), _fmt(height))
        if self.title:
            dwg.set_desc(title=self.title)
        root = dwg.add(dwg.g(id="root", transform=f"scale(1,-1) translate({_fmt(tx)},{_fmt(ty)})"))
        groups = {name: root.add(dwg.g(id=f"layer-{name}", class_=name)) for name in LAYERS}

        for item in self.primitives:
            group = groups[item.layer]
            if item.kind == "path":
                attrs = dict(
                    d=_path_data(item.points, item.closed),
                    fill="none",
                    stroke=item.color,
                    stroke_width=_fmt(stroke),
                    class_=item.css_class,
                )
                if item.element_id:
                    attrs["id"] = item.element_id
                group.add(dwg.path(**attrs))
            elif item.kind == "cross":
                x, y = item.points[0]
                d = (
                    f"M{_fmt(x - marker)},{_fmt(y - marker)} L{_fmt(x + marker)},{_fmt(y + marker)} "
                    f"M{_fmt(x - marker)},{_fmt(y + marker)} L{_fmt(x + marker)},{_fmt(y - marker)}"
                )
                group.add(dwg.path(d=d, stroke=item.color, stroke_width=_fmt(stroke), class_=item.css_class))
            else:
                x, y = item.points[0]
                group.add(dwg.circle(center=(_fmt(x), _fmt(y)), r=_fmt(marker), fill=item.color, class_=item.css_class))
        return dwg

    def save(self, path: Path) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.drawing().tostring(), encoding="utf-8")
        logger.info(f"Wrote {path}")
        return path


# ========= LAYER BUILDERS =========

def add_wavefront(figure: Figure, points: np.ndarray) -> None:
    figure.polyline("wavefront", points, "wavefront", "wavefront", "wavefront")
    figure.dot(np.zeros(2))


def add_ovals(figure: Figure, polylines: Iterable[Tuple[int, float, Branch, np.ndarray]]) -> None:
    for focus_index, _, branch, vertices in polylines:
        figure.polyline(
            "ovals", vertices, "oval", f"oval {branch.value}", f"oval-{focus_index}-{branch.value}", closed=True
        )


def add_profile(figure: Figure, profile: Profile, prefix: str = "sheet") -> None:
    for key, sheet in profile.sheets.items():
        for number, segment in enumerate(sheet.segments()):
            figure.polyline(
                "sheets",
                np.array([p.y for p in segment]),
                key.branch.value,
                f"sheet {key.branch.value}",
                f"{prefix}-a{profile.a:g}-{key.label}-{number}",
            )
        for index in sheet.flagged_indices():
            figure.cross(sheet.points[index].y)


def add_caustic(figure: Figure, caustic: CausticCurve) -> None:
    if not caustic.points:
        return
    # break the polyline at flat gaps
    runs: List[List[np.ndarray]] = [[]]
    gap_starts = {g.t_start for g in caustic.gaps}
    previous_t = None
    for cp in caustic.points:
        if previous_t is not None and any(previous_t < t0 < cp.source.t for t0 in gap_starts):
            runs.append([])
        runs[-1].append(cp.c)
        previous_t = cp.source.t
    for number, run in enumerate(runs):
        figure.polyline("caustic", np.array(run), "caustic", "caustic", f"caustic-{number}")


def add_rays(figure: Figure, records: Sequence[RayRecord], count: int, length: float) -> None:
    eligible = [r for r in records if r.eligible and r.direction is not None]
    if not eligible or count == 0:
        return
    picks = np.unique(np.linspace(0, len(eligible) - 1, min(count, len(eligible))).round().astype(int))
    for number, k in enumerate(picks):
        record = eligible[int(k)]
        figure.polyline("rays", np.array([np.zeros(2), record.y]), "ray", "ray incident", f"ray-{number}-in")
        figure.polyline(
            "rays",
            np.array([record.y, record.y + length * record.direction]),
            "ray",
            "ray refracted",
            f"ray-{number}-out",
        )


def add_revolved(figure: Figure, profile: Profile, axis: np.ndarray) -> None:
    """Oblique projection of the sheets revolved about the line through F along `axis`."""
    options = figure.options
    e_u = axis / np.hypot(*axis)
    e_v = np.array([-e_u[1], e_u[0]])
    tilt = options.revolve_tilt
    for key, sheet in profile.sheets.items():
        for number, segment in enumerate(sheet.segments()):
            pts = np.array([p.y for p in segment])
            u, v = pts @ e_u, pts @ e_v
            for k in range(options.revolve_meridians):
                phi = 2.0 * math.pi * k / options.revolve_meridians
                screen_u = u * math.cos(tilt) + v * math.sin(phi) * math.sin(tilt)
                screen_v = v * math.cos(phi)
                projected = np.outer(screen_u, e_u) + np.outer(screen_v, e_v)
                figure.polyline(
                    "sheets",
                    projected,
                    key.branch.value,
                    "revolved",
                    f"revolved-a{profile.a:g}-{key.label}-{number}-{k}",
                )

