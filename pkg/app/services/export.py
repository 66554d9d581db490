# app/services/export.py
"""CSV artifacts. Floats are written with 17 significant digits so they read back exactly."""

import logging
from pathlib import Path
from typing import List, Mapping, Sequence, Tuple

import numpy as np
import pandas as pd

from app.models.caustic import CausticPoint
from app.models.geometry import Branch, Media
from app.models.profile import Sheet
from app.services.caustic import sweep_parameters

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"
SHEET_COLUMNS = ["t", "x.x", "x.y", "lambda", "y.x", "y.y", "branch", "residual", "singular_flag"]
OVAL_COLUMNS = ["a", "focus_index", "t", "branch", "vertex", "px", "py"]
CAUSTIC_COLUMNS = ["t", "x.x", "x.y", "rho", "c.x", "c.y", "a1", "a2"]


def _write(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"Wrote {path}")
    return path


def sheet_frame(sheet: Sheet) -> pd.DataFrame:
    rows = [
        (
            p.sample.t,
            p.sample.point[0],
            p.sample.point[1],
            p.lam,
            p.y[0],
            p.y[1],
            p.branch.value,
            p.residual,
            int(p.singular),
        )
        for p in sheet.points
    ]
    return pd.DataFrame(rows, columns=SHEET_COLUMNS)


def write_sheet(sheet: Sheet, path: Path) -> Path:
    return _write(sheet_frame(sheet), path)


def read_sheet(path: Path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


OvalRecord = Tuple[int, float, Branch, np.ndarray]


def oval_frame(ovals: Mapping[float, Sequence[OvalRecord]]) -> pd.DataFrame:
    """One row per polyline vertex, for every a and every focus x."""
    rows: List[tuple] = []
    for a, polylines in ovals.items():
        for focus_index, t, branch, vertices in polylines:
            for k, (px, py) in enumerate(vertices):
                rows.append((a, focus_index, t, branch.value, k, px, py))
    return pd.DataFrame(rows, columns=OVAL_COLUMNS)


def write_ovals(ovals: Mapping[float, Sequence[OvalRecord]], path: Path) -> Path:
    return _write(oval_frame(ovals), path)


def caustic_frame(points: Sequence[CausticPoint], media: Media) -> pd.DataFrame:
    rows = []
    for cp in points:
        sweep = sweep_parameters(cp, media)
        rows.append((cp.source.t, cp.x[0], cp.x[1], cp.rho, cp.c[0], cp.c[1], sweep.a1, sweep.a2))
    return pd.DataFrame(rows, columns=CAUSTIC_COLUMNS)


def write_caustic(points: Sequence[CausticPoint], media: Media, path: Path) -> Path:
    return _write(caustic_frame(points, media), path)
