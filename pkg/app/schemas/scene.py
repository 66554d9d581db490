# app/schemas/scene.py
import math
from abc import ABC, abstractmethod
from enum import Enum
from typing import Annotated, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.config import get_settings
from app.models.caustic import Region
from app.models.geometry import Branch

Point = Tuple[float, float]
Orientation = Literal[1, -1]


class Task(str, Enum):
    OVALS = "ovals"
    PROFILE = "profile"
    CAUSTIC = "caustic"
    RECONSTRUCT = "reconstruct"
    VALIDATE = "validate"
    RENDER = "render"


# Pipeline order; tasks always run in this order whatever the scene lists.
TASK_ORDER: Tuple[Task, ...] = tuple(Task)
PROFILE_TASKS = {Task.PROFILE, Task.RECONSTRUCT, Task.VALIDATE, Task.RENDER, Task.OVALS}


class _Wavefront(BaseModel, ABC):
    model_config = ConfigDict(extra="forbid", frozen=True)

    t_range: Optional[Point] = None

    @abstractmethod
    def shifted(self, dx: float, dy: float) -> "_Wavefront":
        """Same wavefront with its geometry translated by (dx, dy)."""


class CircleWavefront(_Wavefront):
    kind: Literal["circle"] = "circle"
    center: Point = (0.0, 0.0)
    radius: float = Field(1.0, gt=0)
    orientation: Orientation = -1

    def shifted(self, dx: float, dy: float) -> "CircleWavefront":
        return self.model_copy(update={"center": (self.center[0] + dx, self.center[1] + dy)})


class ParabolaWavefront(_Wavefront):
    kind: Literal["parabola"] = "parabola"
    focal_scale: float = 1.0
    rotation: float = 0.0
    offset: Point = (0.0, 3.0)
    orientation: Orientation = 1

    @field_validator("focal_scale")
    @classmethod
    def nonzero_scale(cls, value: float) -> float:
        if value == 0:
            raise ValueError("focal_scale must be nonzero")
        return value

    def shifted(self, dx: float, dy: float) -> "ParabolaWavefront":
        return self.model_copy(update={"offset": (self.offset[0] + dx, self.offset[1] + dy)})


class EllipseWavefront(_Wavefront):
    kind: Literal["ellipse"] = "ellipse"
    semi_axes: Tuple[Annotated[float, Field(gt=0)], Annotated[float, Field(gt=0)]] = (2.0, 1.0)
    rotation: float = 0.0
    offset: Point = (0.0, 3.0)
    orientation: Orientation = -1

    def shifted(self, dx: float, dy: float) -> "EllipseWavefront":
        return self.model_copy(update={"offset": (self.offset[0] + dx, self.offset[1] + dy)})


class SplineWavefront(_Wavefront):
    kind: Literal["spline"] = "spline"
    points: List[Point] = Field(..., min_length=2)
    orientation: Orientation = 1

    def shifted(self, dx: float, dy: float) -> "SplineWavefront":
        return self.model_copy(update={"points": [(x + dx, y + dy) for x, y in self.points]})


Wavefront = Annotated[
    Union[CircleWavefront, ParabolaWavefront, EllipseWavefront, SplineWavefront],
    Field(discriminator="kind"),
]


def default_t_range(wavefront: _Wavefront) -> Optional[Point]:
    """None means the curve's own domain (splines)."""
    if wavefront.t_range is not None:
        return wavefront.t_range
    if isinstance(wavefront, (CircleWavefront, EllipseWavefront)):
        return (0.0, 2.0 * math.pi)
    if isinstance(wavefront, ParabolaWavefront):
        return (-1.0, 1.0)
    return None


class SamplingOptions(BaseModel):
    model_config = ConfigDict(extra="forbid")

    wavefront_samples: int = Field(default_factory=lambda: get_settings().wavefront_samples, ge=16)
    oval_resolution: int = Field(default_factory=lambda: get_settings().oval_resolution, ge=16)
    phi_resolution: int = Field(default_factory=lambda: get_settings().phi_resolution, ge=16)
    oval_foci: int = Field(5, ge=1)


class Tolerances(BaseModel):
    model_config = ConfigDict(extra="forbid")

    membership: float = Field(default_factory=lambda: get_settings().membership_tol, gt=0)
    singular: float = Field(default_factory=lambda: get_settings().singular_tol, gt=0)
    flat_curvature: float = Field(default_factory=lambda: get_settings().flat_curvature, gt=0)
    singular_margin: int = Field(default_factory=lambda: get_settings().singular_margin, ge=0)


class Thresholds(BaseModel):
    model_config = ConfigDict(extra="forbid")

    deviation: float = Field(default_factory=lambda: get_settings().deviation_threshold, gt=0)
    path: float = Field(default_factory=lambda: get_settings().path_threshold, gt=0)
    hausdorff: float = Field(default_factory=lambda: get_settings().hausdorff_threshold, gt=0)


class ValidationOptions(BaseModel):
    model_config = ConfigDict(extra="forbid")

    refraction: bool = True
    virtual_source: bool = True
    virtual_source_branch: Branch = Branch.EXTERIOR
    front_facing_only: bool = False
    do_nothing: bool = True


DEFAULT_COLORS: Dict[str, str] = {
    "wavefront": "#1f4e9a",
    "oval": "#9a9a9a",
    "interior": "#c0392b",
    "exterior": "#27864b",
    "reversed": "#8e44ad",
    "caustic": "#e67e22",
    "ray": "#5d6d7e",
    "source": "#000000",
    "singular": "#000000",
}


class RenderOptions(BaseModel):
    model_config = ConfigDict(extra="forbid")

    colors: Dict[str, str] = Field(default_factory=lambda: dict(DEFAULT_COLORS))
    stroke_width: float = Field(0.02, gt=0)
    revolve: bool = False
    revolve_tilt: float = Field(0.35, gt=0, lt=math.pi / 2)
    revolve_meridians: int = Field(12, ge=2)
    rays: int = Field(24, ge=0)

    @field_validator("colors")
    @classmethod
    def fill_colors(cls, value: Dict[str, str]) -> Dict[str, str]:
        return {**DEFAULT_COLORS, **value}


class Scene(BaseModel):
    """A scene file. Coordinates are in scene units; F may sit anywhere."""

    model_config = ConfigDict(extra="forbid")

    version: Literal[1] = 1
    name: Optional[str] = None
    n1: float = Field(..., gt=0)
    n2: float = Field(..., gt=0)
    source: Point = (0.0, 0.0)
    wavefront: Wavefront
    a: List[Annotated[float, Field(ge=0)]] = Field(..., min_length=1)
    sampling: SamplingOptions = Field(default_factory=SamplingOptions)
    tolerances: Tolerances = Field(default_factory=Tolerances)
    thresholds: Thresholds = Field(default_factory=Thresholds)
    tasks: List[Task] = Field(
        default_factory=lambda: [Task.OVALS, Task.PROFILE, Task.CAUSTIC, Task.VALIDATE, Task.RENDER],
        min_length=1,
    )
    region: Optional[Region] = None
    validation: ValidationOptions = Field(default_factory=ValidationOptions)
    render: RenderOptions = Field(default_factory=RenderOptions)
    # Set on load: scene coordinates = computation coordinates + translation.
    translation: Point = (0.0, 0.0)

    @field_validator("wavefront", mode="before")
    @classmethod
    def bare_kind(cls, value):
        if isinstance(value, str):
            return {"kind": value}
        return value

    @field_validator("tasks")
    @classmethod
    def unique_tasks(cls, value: List[Task]) -> List[Task]:
        return [task for task in TASK_ORDER if task in value]

    @model_validator(mode="after")
    def distinct_indices(self) -> "Scene":
        needing = sorted(t.value for t in PROFILE_TASKS & set(self.tasks))
        if self.n1 == self.n2 and needing:
            raise ValueError(
                f"indices-equal: n1 = n2 = {self.n1} but tasks {needing} construct ovals or profiles"
            )
        return self

    def centered(self) -> "Scene":
        """Copy with F moved to the origin; the shift is accumulated in `translation`."""
        sx, sy = self.source
        if sx == 0.0 and sy == 0.0:
            return self
        return self.model_copy(update={
            "source": (0.0, 0.0),
            "wavefront": self.wavefront.shifted(-sx, -sy),
            "translation": (self.translation[0] + sx, self.translation[1] + sy),
        })
