# app/services/scene_loader.py
import json
import logging
from pathlib import Path
from typing import Union

from pydantic import ValidationError

from app.errors import ParseError, SceneError, SchemaError
from app.models.geometry import Media, Sampling
from app.schemas.scene import (
    CircleWavefront,
    EllipseWavefront,
    ParabolaWavefront,
    Scene,
    SplineWavefront,
    default_t_range,
)
from app.services.geom import Circle, Curve, Ellipse, Parabola, SplineCurve

logger = logging.getLogger(__name__)


def _violations(exc: ValidationError):
    out = []
    for error in exc.errors():
        loc = ".".join(str(part) for part in error["loc"]) or "scene"
        message = error["msg"].removeprefix("Value error, ")
        out.append(f"{loc}: {message}")
    return out


def parse_scene(text: str, source: str = "<scene>") -> Scene:
    try:
        scene = Scene.model_validate_json(text)
    except ValidationError as exc:
        if any(error["type"] == "json_invalid" for error in exc.errors()):
            try:
                json.loads(text)
            except json.JSONDecodeError as decode:
                raise ParseError(f"{source}: {decode.msg}", decode.lineno, decode.colno)
            raise ParseError(f"{source}: malformed scene document")
        raise SchemaError(_violations(exc))
    return scene.centered()


def load_scene(path: Union[str, Path]) -> Scene:
    """Read, validate and centre a scene file on F."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SceneError(f"cannot read scene file {path}: {exc.strerror}")
    scene = parse_scene(text, str(path))
    logger.info(f"Loaded scene {scene.name or path.stem} ({scene.wavefront.kind}, a={scene.a})")
    return scene


def build_curve(scene: Scene) -> Curve:
    wavefront = scene.wavefront
    if isinstance(wavefront, CircleWavefront):
        return Circle(wavefront.center, wavefront.radius, wavefront.orientation)
    if isinstance(wavefront, ParabolaWavefront):
        return Parabola(wavefront.focal_scale, wavefront.rotation, wavefront.offset, wavefront.orientation)
    if isinstance(wavefront, EllipseWavefront):
        return Ellipse(wavefront.semi_axes, wavefront.rotation, wavefront.offset, wavefront.orientation)
    if isinstance(wavefront, SplineWavefront):
        return SplineCurve(wavefront.points, wavefront.orientation)
    raise SchemaError([f"wavefront.kind: unsupported kind {wavefront.kind!r}"])


def build_media(scene: Scene) -> Media:
    return Media(n1=scene.n1, n2=scene.n2)


def build_sampling(scene: Scene, curve: Curve) -> Sampling:
    t_range = default_t_range(scene.wavefront) or curve.domain()
    return Sampling(float(t_range[0]), float(t_range[1]), scene.sampling.wavefront_samples)
