import math

import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.spatial import cKDTree

from app.errors import DomainError, EmptyProfileError, IndicesEqualError, ZeroGradientError
from app.models.geometry import ALL_BRANCHES, Branch, Media, OvalSpec, Sampling, WavefrontSample, vec2
from app.models.profile import EventKind, Family, SheetKey, SheetPoint
from app.services.geom import Circle, Parabola, normal_offset, sample_wavefront
from app.services.oval import bipolar_residual, membership_scale, residual_gradient
from app.services.profile import (
    SheetAssembler,
    build_profile,
    discriminants,
    is_singular,
    polyline_derivative,
    sheet_point_at,
    sheet_tangents,
    solve_lambda,
    tangency_angle,
)


class TestSolveLambda:
    def test_on_axis_roots(self, axis_sample, media):
        roots = solve_lambda(axis_sample, media, 1.0)
        assert [r.lam for r in roots] == pytest.approx([-2.0, -1.2, 0.4, 6.0], abs=1e-12)
        assert [r.branch for r in roots] == [Branch.EXTERIOR, Branch.INTERIOR, Branch.INTERIOR, Branch.EXTERIOR]

    def test_discriminants(self, axis_sample, media):
        assert discriminants(axis_sample, media, 1.0) == (12.25, 0.25)

    def test_equal_indices_discriminants(self, axis_sample):
        d1, d2 = discriminants(axis_sample, Media(1.3, 1.3), 0.7)
        assert d1 >= 0 and d2 >= 0

    def test_zero_parameter_at_origin(self, media):
        sample = WavefrontSample(0.0, vec2(0.0, 0.0), vec2(1.0, 0.0), vec2(0.0, 1.0), 1.0)
        assert discriminants(sample, media, 0.0) == (0.0, 0.0)

    def test_no_solution_on_this_normal(self):
        # n1 > n2 with a = 0: both discriminants negative
        media = Media(1.5, 1.0)
        sample = WavefrontSample(0.0, vec2(0.0, 2.0), vec2(0.0, 1.0), vec2(-1.0, 0.0), 0.0)
        d1, d2 = discriminants(sample, media, 0.0)
        assert d1 < 0 and d2 < 0
        assert solve_lambda(sample, media, 0.0) == []

    def test_equal_indices(self, axis_sample):
        with pytest.raises(IndicesEqualError):
            solve_lambda(axis_sample, Media(1.0, 1.0), 1.0)

    def test_negative_parameter(self, axis_sample, media):
        with pytest.raises(DomainError):
            solve_lambda(axis_sample, media, -0.1)

    def test_roots_bracketed_by_residual_sign_changes(self, parabola, media):
        """Every sign change of a branch residual along the normal line is a returned root."""
        grid = np.linspace(-40.0, 40.0, 16001)
        for t in (-0.8, 0.0, 0.35, 0.9):
            sample = sample_wavefront(parabola, t)
            spec = OvalSpec(x=sample.point, media=media, a=2.0)
            roots = solve_lambda(sample, media, 2.0, ALL_BRANCHES)
            for branch in ALL_BRANCHES:
                def along(lam, branch=branch):
                    return bipolar_residual(normal_offset(sample, lam), spec, branch)

                values = np.array([along(lam) for lam in grid])
                # roots landing on a grid node show up as exact zeros, not sign changes
                on_grid = [float(grid[k]) for k in np.flatnonzero(values == 0.0)]
                changes = np.flatnonzero(values[:-1] * values[1:] < 0)
                expected = sorted(
                    on_grid + [brentq(along, grid[k], grid[k + 1], xtol=1e-14) for k in changes]
                )
                ours = sorted(r.lam for r in roots if r.branch is branch)
                assert ours == pytest.approx(expected, abs=1e-9)

    def test_magnitudes_follow_closed_form(self, parabola, media):
        a = 2.0
        n1, n2 = media.n1, media.n2
        for t in np.linspace(-1.0, 1.0, 9):
            sample = sample_wavefront(parabola, float(t))
            xn = float(sample.point @ sample.normal)
            xx = float(sample.point @ sample.point)
            closed = []
            for i, delta in zip((1, 2), discriminants(sample, media, a)):
                if delta < 0:
                    continue
                head = 2 * a * n2 - (-1) ** i * n1 * n1 * xn
                for sign in (1, -1):
                    closed.append(abs((head + sign * math.sqrt(delta)) / (n2 * n2 - n1 * n1)))
            ours = sorted(abs(r.lam) for r in solve_lambda(sample, media, a, ALL_BRANCHES))
            assert ours == pytest.approx(sorted(closed), abs=1e-10)


class TestIsSingular:
    def test_examples(self):
        sample = WavefrontSample(0.0, vec2(0.0, 1.0), vec2(1.0, 0.0), vec2(0.0, 1.0), 0.5)
        assert is_singular(sample, 2.0, 1e-8)
        assert not is_singular(sample, 0.4, 1e-8)
        flat = WavefrontSample(0.0, vec2(0.0, 1.0), vec2(1.0, 0.0), vec2(0.0, 1.0), 0.0)
        assert not is_singular(flat, 1e6, 1e-8)

    def test_tolerance_must_be_positive(self, axis_sample):
        with pytest.raises(DomainError):
            is_singular(axis_sample, 2.0, 0.0)


class TestBuildProfile:
    def test_circle_scene_has_four_symmetric_sheets(self, media):
        circle = Circle((0.0, 3.0), 2.0)
        profile = build_profile(circle, media, 1.0, Sampling(0.0, 2 * math.pi, 721))
        classes = {(k.branch, k.side) for k in profile.sheets}
        assert classes == {
            (Branch.INTERIOR, 1), (Branch.INTERIOR, -1), (Branch.EXTERIOR, 1), (Branch.EXTERIOR, -1),
        }
        for branch, side in classes:
            points = np.vstack([
                s.positions() for k, s in profile.sheets.items() if (k.branch, k.side) == (branch, side)
            ])
            mirrored = points * np.array([-1.0, 1.0])
            distance, _ = cKDTree(points).query(mirrored)
            assert distance.max() <= 1e-9

    def test_on_axis_sample_contributes_the_four_roots(self, media):
        circle = Circle((0.0, 3.0), 2.0)
        profile = build_profile(circle, media, 1.0, Sampling(-math.pi / 2, -math.pi / 2, 1))
        lams = sorted(p.lam for s in profile.sheets.values() for p in s.points)
        assert lams == pytest.approx([-6.0, -0.4, 1.2, 2.0], abs=1e-12)

    def test_residuals_within_tolerance(self, parabola_profile):
        bound = 1e-9 * membership_scale(parabola_profile.a)
        for sheet in parabola_profile.sheets.values():
            assert all(abs(p.residual) <= bound for p in sheet.points)
            ts = [p.sample.t for p in sheet.points]
            assert ts == sorted(ts)

    def test_points_are_normal_offsets(self, parabola_profile):
        for sheet in parabola_profile.sheets.values():
            for p in sheet.points[::50]:
                np.testing.assert_array_equal(p.y, p.sample.point + p.lam * p.sample.normal)

    def test_parabola_sheets(self, parabola_profile):
        labels = [k.label for k in parabola_profile.sheets]
        assert labels == ["interior_+0", "interior_-0", "exterior_+0", "exterior_-0"]
        middle = {k.label: s.points[1000] for k, s in parabola_profile.sheets.items()}
        assert middle["interior_-0"].lam == pytest.approx(-2.0, abs=1e-12)
        assert middle["interior_+0"].lam == pytest.approx(0.4, abs=1e-12)
        assert middle["exterior_+0"].lam == pytest.approx(14.0, abs=1e-12)
        np.testing.assert_allclose(middle["exterior_+0"].y, [0.0, 17.0], atol=1e-12)

    def test_unflagged_points_are_regular(self, parabola_profile):
        for sheet in parabola_profile.sheets.values():
            for index, p in enumerate(sheet.points):
                if index not in sheet.singular_indices:
                    assert not is_singular(p.sample, p.lam)

    def test_threaded_build_is_identical(self, parabola, media):
        sampling = Sampling(-1.0, 1.0, 101)
        serial = build_profile(parabola, media, 2.0, sampling, workers=1)
        threaded = build_profile(parabola, media, 2.0, sampling, workers=3)
        assert list(serial.sheets) == list(threaded.sheets)
        for key in serial.sheets:
            np.testing.assert_array_equal(serial.sheets[key].positions(), threaded.sheets[key].positions())

    def test_empty_profile(self):
        # n1 > n2, a = 0 and normal lines passing far from F: no real offset anywhere
        line = Parabola(1e6, offset=(0.0, 2.0))
        with pytest.raises(EmptyProfileError):
            build_profile(line, Media(1.5, 1.0), 0.0, Sampling(3.0, 4.0, 16))

    def test_equal_indices(self, parabola):
        with pytest.raises(IndicesEqualError):
            build_profile(parabola, Media(1.0, 1.0), 1.0, Sampling(-1.0, 1.0, 16))

    def test_singular_point_is_flagged(self, parabola, media):
        # a = 2.75 puts the centre of curvature (0, 4) of the vertex on the interior oval
        profile = build_profile(parabola, media, 2.75, Sampling(-1.0, 1.0, 401))
        flagged = [s.points[i].y for s in profile.sheets_of(Branch.INTERIOR) for i in s.flagged_indices()]
        assert flagged
        assert min(np.hypot(*(y - vec2(0.0, 4.0))) for y in flagged) <= 1e-6


class TestSheetAssembler:
    def _point(self, t, lam, branch=Branch.INTERIOR):
        sample = WavefrontSample(t, vec2(t, 1.0), vec2(1.0, 0.0), vec2(0.0, 1.0), 0.1)
        return SheetPoint(sample=sample, lam=lam, y=normal_offset(sample, lam), branch=branch, residual=0.0)

    def test_gap_and_resume(self, media):
        assembler = SheetAssembler(a=1.0, media=media)
        assembler.add(0.0, [(1, self._point(0.0, 0.5))])
        assembler.add(0.1, [])
        assembler.add(0.2, [(1, self._point(0.2, 0.6))])
        profile = assembler.finish()
        (sheet,) = profile.sheets.values()
        assert len(sheet) == 2
        assert sheet.breaks == [1]
        assert [e.kind for e in profile.events] == [EventKind.GAP, EventKind.RESUME]

    def test_split_and_merge(self, media):
        assembler = SheetAssembler(a=1.0, media=media)
        assembler.add(0.0, [(1, self._point(0.0, 0.5))])
        assembler.add(0.1, [(1, self._point(0.1, 0.5)), (1, self._point(0.1, 3.0))])
        assembler.add(0.2, [(1, self._point(0.2, 2.9))])
        profile = assembler.finish()
        assert [k.rank for k in profile.sheets] == [0, 1]
        kinds = [e.kind for e in profile.events]
        assert kinds == [EventKind.SPLIT, EventKind.MERGE]
        assert profile.events[1].key.rank == 0

    def test_caustic_crossing_is_marked(self, media):
        assembler = SheetAssembler(a=1.0, media=media)
        for t, lam in ((0.0, 9.0), (0.1, 9.9), (0.2, 10.3)):
            assembler.add(t, [(1, self._point(t, lam))])
        (sheet,) = assembler.finish().sheets.values()
        # lam * kappa - 1 changes sign between 9.9 and 10.3; 9.9 is nearer
        assert sheet.caustic_crossings == [1]

    def test_family_labels(self, media):
        assembler = SheetAssembler(a=1.0, media=media, family=Family.PRIME)
        assembler.add(0.0, [(-1, self._point(0.0, -0.5, Branch.REVERSED))])
        (key,) = assembler.finish().sheets
        assert key.label == "a_prime_reversed_-0"


class TestTangency:
    def test_sheet_tangent_to_oval(self, parabola_profile, media):
        sheet = parabola_profile.sheets[SheetKey(Branch.INTERIOR, -1)]
        tangents = sheet_tangents(sheet)
        for index in range(2, len(sheet) - 2, 25):
            p = sheet.points[index]
            spec = OvalSpec(x=p.sample.point, media=media, a=parabola_profile.a)
            assert tangency_angle(p.y, spec, tangents[index], p.branch) <= 1e-6

    def test_gradient_is_perpendicular(self, axis_spec):
        y = vec2(1.4, 0.0)
        grad = residual_gradient(y, axis_spec, Branch.INTERIOR)
        assert tangency_angle(y, axis_spec, grad) == pytest.approx(math.pi / 2)

    def test_focus(self, axis_spec):
        with pytest.raises(ZeroGradientError):
            tangency_angle(vec2(0.0, 0.0), axis_spec, vec2(1.0, 0.0), Branch.INTERIOR)

    def test_zero_tangent(self, axis_spec):
        with pytest.raises(DomainError):
            tangency_angle(vec2(1.4, 0.0), axis_spec, vec2(0.0, 0.0))


def test_polyline_derivative_exact_on_quartics():
    t = np.linspace(0.0, 1.0, 11)
    points = np.column_stack([t**4, t**2])
    derivative = polyline_derivative(points, 0.1)
    np.testing.assert_allclose(derivative[2:-2], np.column_stack([4 * t**3, 2 * t])[2:-2], atol=1e-12)
    np.testing.assert_allclose(derivative[:, 1], 2 * t, atol=1e-12)


def test_polyline_derivative_degenerate_inputs():
    assert np.all(np.isnan(polyline_derivative(np.array([[1.0, 2.0]]), 0.1)))
    np.testing.assert_allclose(polyline_derivative(np.array([[0.0, 0.0], [1.0, 2.0]]), 0.5), [[2.0, 4.0]] * 2)


def test_sheet_point_at_matches_grid(parabola, media, parabola_profile):
    key = SheetKey(Branch.EXTERIOR, 1)
    sheet = parabola_profile.sheets[key]
    on_grid = sheet.points[700]
    again = sheet_point_at(parabola, media, parabola_profile.a, key, on_grid.sample.t, on_grid.lam)
    assert again.lam == pytest.approx(on_grid.lam, abs=1e-12)
    assert sheet_point_at(parabola, media, parabola_profile.a, SheetKey(Branch.REVERSED, 1), 0.0, 0.0) is None
