import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from app.config import get_settings
from app.models.geometry import Media, OvalSpec, Sampling, WavefrontSample, vec2
from app.services.geom import Parabola
from app.services.profile import build_profile

settings.register_profile("refractor", deadline=None, max_examples=60)
settings.load_profile("refractor")

PARABOLA_A = 2.0
REFRACTION_A = 1.8


@pytest.fixture(autouse=True)
def _fresh_settings():
    get_settings.cache_clear()
    yield
    get_settings.cache_clear()


@pytest.fixture(scope="session")
def media() -> Media:
    return Media(n1=1.0, n2=1.5)


@pytest.fixture(scope="session")
def axis_spec(media) -> OvalSpec:
    """x = (1, 0), a = 1: interior loop through (1.4, 0) and (-0.2, 0), exterior through (7, 0) and (-1, 0)."""
    return OvalSpec(x=vec2(1.0, 0.0), media=media, a=1.0)


@pytest.fixture(scope="session")
def axis_sample() -> WavefrontSample:
    return WavefrontSample(t=0.0, point=vec2(1.0, 0.0), tangent=vec2(0.0, 1.0), normal=vec2(1.0, 0.0), curvature=0.5)


@pytest.fixture(scope="session")
def parabola() -> Parabola:
    return Parabola(focal_scale=1.0, offset=(0.0, 3.0))


@pytest.fixture(scope="session")
def concave_parabola() -> Parabola:
    return Parabola(focal_scale=1.0, rotation=np.pi, offset=(0.0, 3.0))


@pytest.fixture(scope="session")
def fine_sampling() -> Sampling:
    return Sampling(-1.0, 1.0, 2001)


@pytest.fixture(scope="session")
def parabola_profile(parabola, media, fine_sampling):
    return build_profile(parabola, media, PARABOLA_A, fine_sampling)


@pytest.fixture(scope="session")
def refraction_profile(parabola, media, fine_sampling):
    """a = 1.8: rays transmit where x.n > 2a/n2, i.e. for |t| < 0.61 on the refracting sheet."""
    return build_profile(parabola, media, REFRACTION_A, fine_sampling)


@pytest.fixture(scope="session")
def concave_profile(concave_parabola, media, fine_sampling):
    return build_profile(concave_parabola, media, PARABOLA_A, fine_sampling)


@pytest.fixture
def parabola_scene_file(tmp_path) -> Path:
    path = tmp_path / "parabola.json"
    path.write_text(json.dumps({
        "version": 1,
        "name": "parabola",
        "n1": 1.0,
        "n2": 1.5,
        "wavefront": {"kind": "parabola", "focal_scale": 1.0, "offset": [0.0, 3.0]},
        "a": [PARABOLA_A],
        "sampling": {"wavefront_samples": 401, "oval_foci": 2, "oval_resolution": 90, "phi_resolution": 90},
        "tasks": ["ovals", "profile", "caustic", "validate", "render"],
    }))
    return path
