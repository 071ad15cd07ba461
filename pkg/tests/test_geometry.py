import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from planar_atlas.geometry import (GeometryError, Polyline, UnderSampledError, angle_sweep, contains, crossings,
                                   distance_to_polyline, is_simple, offset_curve, resample_closed,
                                   rotation_number, sample_circle, self_intersections, winding_number)

from conftest import builtin


def square(ccw=True):
    pts = [(-1, -1), (1, -1), (1, 1), (-1, 1)]
    return Polyline(pts if ccw else pts[::-1], closed=True)


def fourier_curve(coeffs, n, phase=0.0):
    """Closed curve sum c_k exp(i k t) sampled at n points."""
    t = 2 * np.pi * np.arange(n) / n + phase
    z = sum(c * np.exp(1j * k * t) for k, c in coeffs.items())
    return Polyline(np.column_stack([z.real, z.imag]), closed=True)


# -- angle sweep ----------------------------------------------------------------

def test_sweep_full_turn():
    r = angle_sweep([(1, 0), (0, 1), (-1, 0), (0, -1), (1, 0)])
    assert r.total_angle == pytest.approx(2 * math.pi)
    assert r.turns == pytest.approx(1.0)


def test_sweep_constant_direction():
    assert angle_sweep([(1, 0), (1, 0), (1, 0)]).total_angle == 0.0


def test_sweep_half_negative_turn():
    assert angle_sweep([(1, 0), (0, -1), (-1, 0)]).total_angle == pytest.approx(-math.pi)


def test_sweep_rejects_zero_vector():
    with pytest.raises(GeometryError):
        angle_sweep([(1, 0), (0, 0), (0, 1)])


def test_sweep_rejects_undersampled_turn():
    with pytest.raises(UnderSampledError):
        angle_sweep([(1, 0), (-1, 0.01)])


# -- winding and rotation numbers --------------------------------------------------

def test_winding_of_square():
    assert winding_number(square(), (0, 0)) == 1
    assert winding_number(square(), (5, 5)) == 0
    assert winding_number(square(False), (0, 0)) == -1


def test_winding_rejects_point_on_curve():
    with pytest.raises(GeometryError):
        winding_number(square(), (1.0, 0.0))


def test_winding_of_f0_unit_circle_image():
    pm = builtin("F0")
    img = Polyline(pm.image(sample_circle((0, 0), 1.0, 256).points), closed=True)
    assert winding_number(img, (0, 0)) == -2


@pytest.mark.parametrize("rho", [1e-3, 0.5, 7.0, 1e4])
def test_circle_winds_once(rho):
    assert winding_number(sample_circle((0, 0), rho, 64), (0, 0)) == 1


def test_sample_circle_four_points():
    pts = sample_circle((0, 0), 1.0, 4).points
    assert np.allclose(pts, [(1, 0), (0, 1), (-1, 0), (0, -1)], atol=1e-15)


def test_circle_rotation_is_one():
    assert rotation_number(sample_circle((2, -1), 0.3, 64)) == 1


def test_figure_eight_rotation_zero():
    t = np.linspace(0, 2 * np.pi, 256, endpoint=False) + 0.01
    f8 = Polyline(np.column_stack([np.sin(2 * t), np.sin(t)]), closed=True)
    # oracle: analytic tangent angle accumulated over dense samples
    td = np.linspace(0, 2 * np.pi, 20001)
    ang = np.unwrap(np.arctan2(np.cos(td), 2 * np.cos(2 * td)))
    assert round((ang[-1] - ang[0]) / (2 * np.pi)) == 0
    assert rotation_number(f8) == 0
    xs = self_intersections(f8)
    assert len(xs) == 1 and np.hypot(*xs[0].point) < 1e-3


@pytest.mark.parametrize("r, expected", [(0.1, 1), (1.0, -2), (10.0, 3)])
def test_f0_circle_image_rotation(r, expected):
    pm = builtin("F0")
    img = Polyline(pm.image(sample_circle((0, 0), r, 512).points), closed=True)
    assert rotation_number(img) == expected


def test_rotation_needs_closed_and_enough_samples():
    with pytest.raises(GeometryError):
        rotation_number(Polyline([(0, 0), (1, 0), (1, 1)]))
    with pytest.raises(GeometryError):
        rotation_number(square())


def test_undersampled_curve_refused():
    # star polygon {33/16}: every corner turns by more than pi - 0.1
    k = np.arange(33) * 16
    star = Polyline(np.column_stack([np.cos(2 * np.pi * k / 33), np.sin(2 * np.pi * k / 33)]), closed=True)
    with pytest.raises(UnderSampledError):
        rotation_number(star)


smooth_coeffs = st.dictionaries(st.integers(-4, 4).filter(lambda k: k != 0),
                                st.complex_numbers(min_magnitude=0.1, max_magnitude=1.0,
                                                   allow_nan=False, allow_infinity=False),
                                min_size=1, max_size=4)


def _accepted(fn, curve, *args):
    try:
        return fn(curve, *args)
    except (UnderSampledError, GeometryError):
        return None


def test_refinement_stability_on_random_curves():
    rng = np.random.default_rng(11)
    checked = 0
    for _ in range(20):
        ks = rng.choice([-3, -2, -1, 1, 2, 3], size=3, replace=False)
        coeffs = {int(k): complex(*rng.normal(size=2)) for k in ks}
        c = fourier_curve(coeffs, 512)
        fine = fourier_curve(coeffs, 1024)
        r = _accepted(rotation_number, c)
        if r is None:
            continue
        assert rotation_number(fine) == r
        assert rotation_number(resample_closed(c)) == r
        for p in rng.uniform(-2, 2, size=(5, 2)):
            if distance_to_polyline(p, fine)[0] < 1e-2:
                continue
            assert winding_number(fine, p) == winding_number(c, p) == winding_number(resample_closed(c), p)
        checked += 1
    assert checked >= 15


@given(st.floats(0.0, 0.8), st.integers(2, 7), st.floats(0, 2 * np.pi), st.booleans())
def test_umlaufsatz(a, k, phi, ccw):
    t = 2 * np.pi * np.arange(400) / 400
    r = 1 + a * np.cos(k * t + phi) / k ** 0.5
    pts = np.column_stack([r * np.cos(t), r * np.sin(t)])
    curve = Polyline(pts if ccw else pts[::-1], closed=True)
    r_num = _accepted(rotation_number, curve)
    if r_num is None or not is_simple(curve):
        return
    assert r_num == (1 if ccw else -1)
    assert r_num == (1 if curve.signed_area() > 0 else -1)


@given(smooth_coeffs, st.floats(-1, 1), st.floats(-1, 1))
def test_reversal_negates(coeffs, px, py):
    c = fourier_curve(coeffs, 600)
    r = _accepted(rotation_number, c)
    if r is not None:
        assert rotation_number(c.reversed()) == -r
    if distance_to_polyline((px, py), c)[0] > 1e-6:
        w = _accepted(winding_number, c, (px, py))
        if w is not None:
            assert winding_number(c.reversed(), (px, py)) == -w


@given(smooth_coeffs)
def test_results_are_integers(coeffs):
    c = fourier_curve(coeffs, 300)
    r = _accepted(rotation_number, c)
    assert r is None or isinstance(r, int)


# -- intersections -------------------------------------------------------------------

def test_convex_polygon_has_no_self_intersections():
    assert self_intersections(sample_circle((0, 0), 1, 50)) == []


def test_f0_outer_image_is_stellated_pentagon(f0):
    pm, curves, images = f0
    by_cusps = {len(c.cusps): img for c, img in zip(curves, images)}
    assert len(self_intersections(by_cusps[5])) == 5
    assert self_intersections(by_cusps[3]) == []


def test_crossings_of_two_segments():
    a = Polyline([(-1, 0), (1, 0)])
    b = Polyline([(0, -1), (0, 1)])
    (x,) = crossings(a, b)
    assert np.allclose(x.point, (0, 0)) and x.s == pytest.approx(0.5)


def test_crossing_each_reported_once():
    c = sample_circle((0, 0), 1.0, 64)
    line = Polyline([(-2, 0.1234), (2, 0.1234)])
    assert len(crossings(line, c)) == 2


def test_collinear_overlap_flagged():
    a = Polyline([(0, 0), (2, 0)])
    b = Polyline([(1, 0), (3, 0)])
    xs = crossings(a, b)
    assert xs and xs[0].degenerate


# -- offsets and containment -------------------------------------------------------------

@pytest.mark.parametrize("side, radius", [("outer", 1.1), ("inner", 0.9), ("right", 1.1), ("left", 0.9)])
def test_circle_offsets(side, radius):
    off = offset_curve(sample_circle((0, 0), 1.0, 128), 0.1, side)
    assert np.abs(np.hypot(*off.points.T) - radius).max() < 1e-3


def test_offset_self_intersection_refused():
    with pytest.raises(GeometryError):
        offset_curve(sample_circle((0, 0), 1.0, 128), 1.5, "inner")


def test_offsets_bracket_f0_outer_curve(f0):
    pm, curves, _ = f0
    g2 = max(curves, key=lambda c: len(c.cusps)).points
    out = offset_curve(g2, 0.05, "outer")
    inn = offset_curve(g2, 0.05, "inner")
    assert is_simple(out) and is_simple(inn)
    assert not crossings(out, inn)
    assert contains(out, g2.points).all()
    assert not contains(inn, g2.points).any()


def test_contains_matches_winding():
    c = fourier_curve({1: 1.0, 2: 0.3}, 300)
    pts = np.random.default_rng(3).uniform(-1.5, 1.5, size=(200, 2))
    inside = contains(c, pts)
    for p, ins in zip(pts, inside):
        w = _accepted(winding_number, c, p)
        if w is not None:
            assert ins == (w != 0)


def test_distance_to_polyline_pruned_path_is_exact():
    c = sample_circle((0, 0), 1.0, 4000)
    pts = np.random.default_rng(4).uniform(-2, 2, size=(100, 2))
    a, b = c.segments()
    from planar_atlas.geometry import point_segment_distance

    brute = point_segment_distance(pts, a, b).min(axis=1)
    assert np.allclose(distance_to_polyline(pts, c), brute, rtol=0, atol=1e-14)


def test_polyline_drops_repeated_points():
    p = Polyline([(0, 0), (0, 0), (1, 0), (1, 1), (0, 0)], closed=True)
    assert len(p) == 3
    with pytest.raises(GeometryError):
        Polyline([(0, 0), (0, 0)])
