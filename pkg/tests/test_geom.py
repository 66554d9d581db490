import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from app.errors import DegenerateParametrizationError, DomainError
from app.models.geometry import WavefrontSample, vec2
from app.services.geom import (
    Circle,
    Ellipse,
    Parabola,
    SplineCurve,
    finite_difference_curvature,
    normal_offset,
    sample_curve,
    sample_wavefront,
)
from app.models.geometry import Sampling

CURVES = [
    (Circle((0.0, 3.0), 2.0), (0.0, 2 * math.pi)),
    (Circle((1.0, -2.0), 0.5, orientation=1), (0.0, 2 * math.pi)),
    (Parabola(1.0, offset=(0.0, 3.0)), (-2.0, 2.0)),
    (Parabola(0.5, rotation=0.7, offset=(1.0, 2.0), orientation=-1), (-2.0, 2.0)),
    (Ellipse((2.0, 1.0), rotation=0.3, offset=(0.0, 3.0)), (0.0, 2 * math.pi)),
]


class TestSampleWavefront:
    def test_circle_bottom_point(self):
        s = sample_wavefront(Circle((0.0, 3.0), 2.0), -math.pi / 2)
        np.testing.assert_allclose(s.point, [0.0, 1.0], atol=1e-15)
        np.testing.assert_allclose(s.normal, [0.0, -1.0], atol=1e-15)
        # normal away from the centre: centre of curvature at point + normal / kappa
        assert s.curvature == pytest.approx(-0.5)
        np.testing.assert_allclose(s.point + s.normal / s.curvature, [0.0, 3.0], atol=1e-14)

    def test_circle_normal_toward_centre_has_positive_curvature(self):
        s = sample_wavefront(Circle((0.0, 3.0), 2.0, orientation=1), -math.pi / 2)
        np.testing.assert_allclose(s.normal, [0.0, 1.0], atol=1e-15)
        assert s.curvature == pytest.approx(0.5)

    def test_parabola_vertex(self):
        s = sample_wavefront(Parabola(1.0), 0.0)
        np.testing.assert_allclose(s.point, [0.0, 0.0])
        np.testing.assert_allclose(s.normal, [0.0, 1.0])
        assert s.curvature == pytest.approx(1.0)

    def test_parabola_curvature_at_one(self):
        s = sample_wavefront(Parabola(1.0), 1.0)
        assert s.curvature == pytest.approx(2 ** -1.5, rel=1e-12)

    def test_spline_outside_domain(self):
        spline = SplineCurve([(0.0, 0.0), (1.0, 1.0), (2.0, 0.0)])
        with pytest.raises(DomainError):
            sample_wavefront(spline, -0.1)

    def test_repeated_control_points_rejected(self):
        with pytest.raises(DegenerateParametrizationError):
            SplineCurve([(0.0, 0.0), (0.0, 0.0), (1.0, 0.0)])

    def test_zero_speed(self):
        class Stalled(Parabola):
            def derivatives(self, t):
                return vec2(0.0, 0.0), vec2(0.0, 1.0)

        with pytest.raises(DegenerateParametrizationError):
            sample_wavefront(Stalled(), 0.0)

    def test_bad_orientation(self):
        with pytest.raises(DomainError):
            Parabola(orientation=2)

    def test_sample_curve_keeps_grid_order(self):
        sampling = Sampling(-1.0, 1.0, 33)
        serial = sample_curve(Parabola(), sampling)
        threaded = sample_curve(Parabola(), sampling, workers=4)
        assert [s.t for s in serial] == [s.t for s in threaded] == list(sampling.grid())


@pytest.mark.parametrize("curve, t_range", CURVES)
@given(fraction=st.floats(min_value=0.01, max_value=0.99))
def test_frame_is_orthonormal_and_curvature_matches_differences(curve, t_range, fraction):
    t = t_range[0] + fraction * (t_range[1] - t_range[0])
    s = sample_wavefront(curve, t)
    assert abs(np.hypot(*s.tangent) - 1.0) <= 1e-12
    assert abs(np.hypot(*s.normal) - 1.0) <= 1e-12
    assert abs(float(s.tangent @ s.normal)) <= 1e-12
    estimate = finite_difference_curvature(curve, t, 1e-4)
    assert abs(s.curvature - estimate) <= 1e-6 * (1.0 + abs(s.curvature))


@pytest.mark.parametrize("curve, t_range", CURVES)
@given(fraction=st.floats(min_value=0.0, max_value=1.0))
def test_flipping_orientation_negates_normal_and_curvature(curve, t_range, fraction):
    t = t_range[0] + fraction * (t_range[1] - t_range[0])
    s, f = sample_wavefront(curve, t), sample_wavefront(curve.flipped(), t)
    np.testing.assert_allclose(f.normal, -s.normal, atol=1e-15)
    assert f.curvature == pytest.approx(-s.curvature, abs=1e-15)
    np.testing.assert_allclose(f.tangent, s.tangent, atol=1e-15)


class TestFiniteDifferenceCurvature:
    def test_circle(self):
        circle = Circle((0.0, 3.0), 2.0, orientation=1)
        for t in np.linspace(0.0, 6.0, 7):
            assert finite_difference_curvature(circle, t, 1e-4) == pytest.approx(0.5, abs=1e-6)

    def test_parabola_vertex(self):
        assert finite_difference_curvature(Parabola(1.0), 0.0, 1e-4) == pytest.approx(1.0, abs=1e-6)

    def test_straight_spline(self):
        line = SplineCurve([(0.0, 0.0), (1.0, 1.0), (3.0, 3.0)])
        assert abs(finite_difference_curvature(line, 1.5, 1e-4)) <= 1e-8

    def test_step_must_be_positive(self):
        with pytest.raises(DomainError):
            finite_difference_curvature(Parabola(), 0.0, 0.0)


class TestNormalOffset:
    def test_examples(self):
        s = WavefrontSample(0.0, vec2(1.0, 0.0), vec2(0.0, 1.0), vec2(1.0, 0.0), 1.0)
        np.testing.assert_allclose(normal_offset(s, 0.4), [1.4, 0.0])
        np.testing.assert_array_equal(normal_offset(s, 0.0), s.point)
        down = WavefrontSample(0.0, vec2(0.0, 1.0), vec2(1.0, 0.0), vec2(0.0, -1.0), 1.0)
        np.testing.assert_allclose(normal_offset(down, 1.0), [0.0, 0.0])

    @given(
        first=st.floats(min_value=-50, max_value=50),
        second=st.floats(min_value=-50, max_value=50),
        angle=st.floats(min_value=0, max_value=2 * math.pi),
    )
    def test_offsets_compose(self, first, second, angle):
        normal = vec2(math.cos(angle), math.sin(angle))
        s = WavefrontSample(0.0, vec2(0.3, -1.2), vec2(-normal[1], normal[0]), normal, 0.2)
        twice = normal_offset(s.with_point(normal_offset(s, first)), second)
        np.testing.assert_allclose(normal_offset(s, first + second), twice, atol=1e-12)
