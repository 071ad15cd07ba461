import numpy as np
import pytest

from planar_atlas.mapdef import (BUILTIN_SOURCES, BlackBoxMap, InfinityHint, MapEvaluationError, builtin_map,
                                 eval_jet, parse_map, pretty, validate_infinity_hint)

from conftest import builtin

TAGS = sorted(BUILTIN_SOURCES)


def _close(a, b, rel, abs_near_zero):
    a, b = np.asarray(a), np.asarray(b)
    err = np.abs(a - b)
    return np.all((err <= rel * np.abs(b)) | (err <= abs_near_zero))


@pytest.mark.parametrize("tag", TAGS)
def test_jacobian_matches_central_differences(tag):
    pm = builtin(tag)
    rng = np.random.default_rng(1)
    h = 1e-5
    for p in rng.uniform(-3, 3, size=(100, 2)):
        J = pm.jacobian(p)
        fd = np.column_stack([(pm(p + h * e) - pm(p - h * e)) / (2 * h) for e in np.eye(2)])
        assert _close(fd, J, 1e-6, 1e-8), (p, J, fd)


@pytest.mark.parametrize("tag", TAGS)
def test_hessians_match_central_differences(tag):
    pm = builtin(tag)
    rng = np.random.default_rng(2)
    h = 1e-4
    for p in rng.uniform(-3, 3, size=(100, 2)):
        H = pm.jet(p).hessians
        fd = np.zeros((2, 2, 2))
        for j, e in enumerate(np.eye(2)):
            col = (pm.jacobian(p + h * e) - pm.jacobian(p - h * e)) / (2 * h)
            fd[:, :, j] = col
        assert _close(fd, H, 1e-4, 1e-8), (p, H, fd)


@pytest.mark.parametrize("tag", TAGS)
def test_hessians_exactly_symmetric(tag):
    pm = builtin(tag)
    for p in np.random.default_rng(3).uniform(-3, 3, size=(20, 2)):
        H = pm.jet(p).hessians
        assert np.array_equal(H, H.transpose(0, 2, 1))


def test_complex_and_expanded_real_forms_agree():
    pz = builtin("F0")
    pxy = parse_map("(x^3 - 3*x*y^2 + 2.5*x^2 - 2.5*y^2 + x, 3*x^2*y - y^3 - 5*x*y + y)", "real-xy")
    for p in np.random.default_rng(4).uniform(-3, 3, size=(100, 2)):
        a, b = pz(p), pxy(p)
        assert np.all(np.abs(a - b) <= 1e-12 * (1 + np.abs(b)))


def test_identity_map():
    pm = parse_map("z")
    jet = eval_jet(pm, (3.0, -4.0))
    assert np.array_equal(jet.value, [3.0, -4.0])
    assert np.array_equal(jet.jacobian, np.eye(2))
    assert np.array_equal(jet.hessians, np.zeros((2, 2, 2)))


def test_z_squared_jacobian():
    J = parse_map("z^2").jacobian((1.0, 0.0))
    assert np.allclose(J, [[2, 0], [0, 2]])
    assert parse_map("z^2").det((1.0, 0.0)) == pytest.approx(4.0)


def test_f0_real_part_formula():
    pm = builtin("F0")
    x, y = 0.7, -1.3
    assert pm((x, y))[0] == pytest.approx(x ** 3 - 3 * x * y ** 2 + 2.5 * x ** 2 - 2.5 * y ** 2 + x, rel=1e-14)


def test_f0_identity_near_origin():
    pm = builtin("F0")
    assert np.array_equal(pm((0.0, 0.0)), [0.0, 0.0])
    assert np.allclose(pm.jacobian((0.0, 0.0)), np.eye(2))


def test_f2_determinant_formula():
    pm = builtin("F2")
    for p in np.random.default_rng(5).uniform(-3, 3, size=(20, 2)):
        assert pm.det(p) == pytest.approx(p @ p - 1, abs=1e-12)


def test_f2_jet_at_top_of_circle():
    jet = eval_jet(builtin("F2"), (0.0, 1.0))
    assert np.allclose(jet.jacobian, [[1, 0], [0, 0]])
    assert jet.det == 0.0
    assert np.allclose(jet.grad_det, [0.0, 2.0])


def test_f3_at_origin():
    assert np.allclose(builtin("F3")((0.0, 0.0)), [0.0, 20.0])


def test_grad_det_matches_differences_of_det():
    pm = builtin("F1")
    h = 1e-6
    for p in np.random.default_rng(6).uniform(-1.5, 1.5, size=(20, 2)):
        fd = np.array([(pm.det(p + h * e) - pm.det(p - h * e)) / (2 * h) for e in np.eye(2)])
        assert np.allclose(pm.grad_det(p), fd, rtol=1e-5, atol=1e-6)


def test_lip_parses_from_text():
    pm = parse_map("(x, y^3/3 + (x^2-1)*y)", "real-xy")
    assert np.allclose(pm((2.0, 3.0)), builtin("F2")((2.0, 3.0)))


@pytest.mark.parametrize("tag, degree", [("F0", 3), ("F1", 7), ("F3", 2)])
def test_infinity_hints(tag, degree):
    pm = builtin(tag)
    assert pm.infinity_hint.degree == degree
    assert validate_infinity_hint(pm) < 1e-3


def test_f2_has_no_hint():
    assert builtin("F2").infinity_hint is None


def test_hint_inferred_for_complex_polynomials():
    assert parse_map("z^5 + 3*zbar^4 - z").infinity_hint == InfinityHint(5, 1.0)
    assert parse_map("zbar^3 + z").infinity_hint is None
    assert parse_map("2*z^2 + zbar").infinity_hint.coefficient == 2.0


def test_wrong_hint_rejected():
    with pytest.raises(ValueError):
        parse_map("z^2 + zbar^3", infinity_hint=InfinityHint(2, 1.0))


def test_unknown_builtin():
    with pytest.raises(KeyError):
        builtin_map("F9")


def test_pole_surfaces_as_error():
    pm = parse_map("(1/x, y)", "real-xy")
    with pytest.raises(MapEvaluationError):
        pm((0.0, 1.0))


def test_nonfinite_point_rejected():
    with pytest.raises(ValueError):
        eval_jet(builtin("F0"), (np.nan, 0.0))


def test_pretty_round_trip_of_builtins():
    for tag in TAGS:
        pm = builtin(tag)
        again = parse_map(pretty(pm), pm.mode)
        for p in np.random.default_rng(7).uniform(-3, 3, size=(10, 2)):
            assert np.array_equal(pm(p), again(p))


def test_vectorized_matches_scalar():
    pm = builtin("F3")
    pts = np.random.default_rng(8).uniform(-3, 3, size=(30, 2))
    img = pm.image(pts)
    assert np.allclose(img, [pm(p) for p in pts], rtol=1e-14, atol=1e-13)
    dets = pm.det_many(pts[:, 0], pts[:, 1])
    assert np.allclose(dets, [pm.det(p) for p in pts], rtol=1e-12, atol=1e-10)


def test_black_box_map_is_flagged():
    bb = BlackBoxMap("sq", lambda x, y: (x, y * y))
    assert bb.describe()["derivatives"] == "finite-difference"
    assert np.allclose(bb.jacobian((1.0, 2.0)), [[1, 0], [0, 4]], atol=1e-6)
    assert np.allclose(bb.jet((1.0, 2.0)).hessians[1], [[0, 0], [0, 2]], atol=1e-3)
