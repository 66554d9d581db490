import json

import numpy as np
import pytest
from pydantic import ValidationError

from app.config import Settings, get_settings
from app.errors import DomainError, ParseError, SceneError, SchemaError
from app.schemas.scene import CircleWavefront, ParabolaWavefront, Scene, SplineWavefront, Task, Tolerances, _Wavefront
from app.services.pipeline import summarize
from app.services.profile import build_profile
from app.services.scene_loader import build_curve, build_media, build_sampling, load_scene, parse_scene


def _scene(**overrides) -> str:
    body = {"n1": 1.0, "n2": 1.5, "wavefront": "parabola", "a": [1.0]}
    body.update(overrides)
    return json.dumps(body)


class TestParseScene:
    def test_minimal_scene_gets_defaults(self):
        scene = parse_scene(_scene())
        assert scene.version == 1
        assert isinstance(scene.wavefront, ParabolaWavefront)
        assert scene.source == (0.0, 0.0)
        assert scene.sampling.wavefront_samples == 512
        assert scene.sampling.oval_resolution == 360
        assert scene.sampling.phi_resolution == 720
        assert scene.tolerances.membership == 1e-9
        assert scene.thresholds.deviation == 1e-6
        assert scene.tasks == [Task.OVALS, Task.PROFILE, Task.CAUSTIC, Task.VALIDATE, Task.RENDER]
        assert scene.translation == (0.0, 0.0)

    def test_tasks_follow_pipeline_order(self):
        scene = parse_scene(_scene(tasks=["render", "profile", "profile"]))
        assert scene.tasks == [Task.PROFILE, Task.RENDER]

    def test_equal_indices_with_profile_task(self):
        with pytest.raises(SchemaError) as info:
            parse_scene(_scene(n1=1.2, n2=1.2, tasks=["profile"]))
        assert any("indices-equal" in v for v in info.value.violations)
        assert info.value.exit_code == 2

    def test_equal_indices_allowed_for_caustic_only(self):
        scene = parse_scene(_scene(n1=1.2, n2=1.2, tasks=["caustic"]))
        assert scene.tasks == [Task.CAUSTIC]

    @pytest.mark.parametrize(
        "overrides, field",
        [
            ({"n1": 0.0}, "n1"),
            ({"a": [-1.0]}, "a.0"),
            ({"a": []}, "a"),
            ({"sampling": {"wavefront_samples": 8}}, "sampling.wavefront_samples"),
            ({"wavefront": {"kind": "hyperbola"}}, "wavefront"),
            ({"colour": "red"}, "colour"),
            ({"version": 2}, "version"),
        ],
    )
    def test_schema_violations_name_the_field(self, overrides, field):
        with pytest.raises(SchemaError) as info:
            parse_scene(_scene(**overrides))
        assert any(v.startswith(field) for v in info.value.violations)

    def test_malformed_document_reports_position(self):
        text = '{\n  "n1": 1.0,\n  oops\n}'
        with pytest.raises(ParseError) as info:
            parse_scene(text, "broken.json")
        assert (info.value.line, info.value.column) == (3, 3)
        assert "broken.json" in info.value.detail
        assert info.value.exit_code == 2

    def test_source_is_moved_to_the_origin(self):
        scene = parse_scene(_scene(source=[2.0, 5.0], wavefront={"kind": "circle", "center": [2.0, 6.0]}))
        assert scene.source == (0.0, 0.0)
        assert scene.translation == (2.0, 5.0)
        assert scene.wavefront == CircleWavefront(center=(0.0, 1.0))


def test_translation_invariance():
    moved = parse_scene(_scene(
        source=[2.0, 5.0],
        wavefront={"kind": "parabola", "offset": [2.0, 8.0]},
        sampling={"wavefront_samples": 101, "oval_foci": 2, "oval_resolution": 64, "phi_resolution": 64},
        tasks=["ovals", "profile", "caustic", "validate"],
    ))
    centred = parse_scene(_scene(
        wavefront={"kind": "parabola", "offset": [0.0, 3.0]},
        sampling={"wavefront_samples": 101, "oval_foci": 2, "oval_resolution": 64, "phi_resolution": 64},
        tasks=["ovals", "profile", "caustic", "validate"],
    ))
    first, second = summarize(moved), summarize(centred)
    assert [c.measured for c in first.checks] == [c.measured for c in second.checks]
    assert [c.eligible for c in first.checks] == [c.eligible for c in second.checks]

    profiles = [
        build_profile(build_curve(s), build_media(s), 1.0, build_sampling(s, build_curve(s)))
        for s in (moved, centred)
    ]
    for a, b in zip(profiles[0].sheets.values(), profiles[1].sheets.values()):
        np.testing.assert_array_equal(a.positions(), b.positions())


class TestLoadScene:
    def test_reads_a_file(self, parabola_scene_file):
        scene = load_scene(parabola_scene_file)
        assert scene.name == "parabola"
        assert scene.sampling.wavefront_samples == 401

    def test_missing_file(self, tmp_path):
        with pytest.raises(SceneError) as info:
            load_scene(tmp_path / "absent.json")
        assert info.value.exit_code == 2

    def test_sampling_ranges(self):
        spline = parse_scene(_scene(wavefront={"kind": "spline", "points": [[0, 1], [1, 2], [3, 2]]}))
        curve = build_curve(spline)
        sampling = build_sampling(spline, curve)
        assert (sampling.t0, sampling.t1) == curve.domain()
        circle = parse_scene(_scene(wavefront="circle"))
        assert build_sampling(circle, build_curve(circle)).t1 == pytest.approx(2 * np.pi)
        ranged = parse_scene(_scene(wavefront={"kind": "parabola", "t_range": [-2, 0.5]}))
        sampling = build_sampling(ranged, build_curve(ranged))
        assert (sampling.t0, sampling.t1) == (-2.0, 0.5)


class TestSettings:
    def test_defaults(self):
        settings = Settings()
        assert settings.membership_tol == 1e-9
        assert settings.singular_margin == 3
        assert settings.workers == 1

    def test_environment_overrides_scene_defaults(self, monkeypatch):
        monkeypatch.setenv("REFRACTOR_MEMBERSHIP_TOL", "1e-7")
        monkeypatch.setenv("REFRACTOR_WAVEFRONT_SAMPLES", "64")
        get_settings.cache_clear()
        assert Tolerances().membership == 1e-7
        assert parse_scene(_scene()).sampling.wavefront_samples == 64

    def test_scene_values_win_over_environment(self, monkeypatch):
        monkeypatch.setenv("REFRACTOR_MEMBERSHIP_TOL", "1e-7")
        get_settings.cache_clear()
        assert parse_scene(_scene(tolerances={"membership": 1e-10})).tolerances.membership == 1e-10


def test_context_keeps_the_error_class():
    error = DomainError("t outside the spline").with_context("task profile, a=2")
    assert isinstance(error, DomainError)
    assert error.exit_code == 3
    assert error.detail == "task profile, a=2: t outside the spline"
    assert str(error) == error.detail


def test_scene_model_is_strict():
    with pytest.raises(ValidationError):
        Scene(n1=1.0, n2=1.5, wavefront={"kind": "circle"}, a=[1.0], extra_field=True)


def test_every_wavefront_kind_shifts():
    assert CircleWavefront(center=(1.0, 2.0)).shifted(-1.0, 1.0).center == (0.0, 3.0)
    assert ParabolaWavefront().shifted(2.0, -3.0).offset == (2.0, 0.0)
    assert SplineWavefront(points=[(0.0, 1.0), (1.0, 2.0)]).shifted(1.0, 1.0).points == [(1.0, 2.0), (2.0, 3.0)]
    with pytest.raises(TypeError):
        _Wavefront()
