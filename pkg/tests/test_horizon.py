import warnings

import numpy as np
import pytest

from artbh.ergosphere import kerr_horizon_curve, kerr_r
from artbh.errors import ErgosphereCharacteristic, NoSignChange, NotCharacteristic
from artbh.horizon import (MINUS, PLUS, CharacteristicField, classify_horizon, circle,
                           ergosphere_noncharacteristic_check, find_limit_cycle, flow_field, is_characteristic_curve,
                           rotating_horizon)
from artbh.metrics import (FlatMetric, KerrMeridionalMetric, PerturbedFlowMetric, draining_bathtub, kerr_cylindrical,
                           tangential_delta)
from artbh.stability import outer_ergosphere, scaled_curve


def _finder(metric, **kw):
    ergo = outer_ergosphere(metric)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return find_limit_cycle(metric, ergo, scaled_curve(ergo, 0.8, (0.0, 0.0)), **kw), ergo


def _polar_distance(a, b):
    """Largest radial gap between two star-shaped curves, comparing r(theta) by periodic interpolation."""
    def polar(c):
        th = np.arctan2(c.vertices[:, 1], c.vertices[:, 0])
        o = np.argsort(th)
        return th[o], np.linalg.norm(c.vertices, axis=1)[o]
    ta, ra = polar(a)
    tb, rb = polar(b)
    return max(np.max(np.abs(np.interp(ta, tb, rb, period=2 * np.pi) - ra)),
               np.max(np.abs(np.interp(tb, ta, ra, period=2 * np.pi) - rb)))


@pytest.fixture(scope="module")
def wh():
    return _finder(draining_bathtub(1.0, 0.5))


def test_unknown_family_is_rejected():
    with pytest.raises(ValueError):
        CharacteristicField(draining_bathtub(1.0, 0.5), "plus")


def test_fields_at_zero_rotation_are_mirror_images():
    # with B = 0 the two projected families are the circles r = A cos(theta - theta0), one per sense
    m = draining_bathtub(1.0, 0.0)
    for th in np.linspace(0, 2 * np.pi, 7):
        rhat = np.array([np.cos(th), np.sin(th)])
        that = np.array([-rhat[1], rhat[0]])
        r = 0.7
        fp = CharacteristicField(m, PLUS)(r * rhat)
        fm = CharacteristicField(m, MINUS)(r * rhat)
        w = np.sqrt(1 - r * r)
        assert np.allclose([fp @ rhat, fp @ that], [w, r], atol=1e-12)
        assert abs(abs(fm @ rhat) - w) < 1e-12 and abs(abs(fm @ that) - r) < 1e-12
        assert (fm @ rhat) * (fm @ that) < 0


def test_plus_field_polar_form():
    A, B, r = 1.0, 1.0, 1.2
    f = CharacteristicField(draining_bathtub(A, B), PLUS)(np.array([r, 0.0]))
    d = np.array([A * A - r * r, A * B + r * np.sqrt(A * A + B * B - r * r)])
    assert np.allclose(f, d / np.linalg.norm(d), atol=1e-8)


def test_fields_agree_on_the_ergosphere():
    m = draining_bathtub(1.0, 1.0)
    x = np.sqrt(2) * np.array([np.cos(0.3), np.sin(0.3)])
    fp = CharacteristicField(m, PLUS, merge_tol=1e-6)(x)
    fm = CharacteristicField(m, MINUS, merge_tol=1e-6)(x)
    assert min(np.linalg.norm(fp - fm), np.linalg.norm(fp + fm)) < 1e-6


def test_flow_spirals_onto_the_horizon():
    m = draining_bathtub(1.0, 0.5)
    y0 = np.sqrt(1.25) * (1 - 1e-9) * np.array([1.0, 0.0])
    fr = flow_field(CharacteristicField(m, PLUS), y0, 50.0)
    assert abs(np.linalg.norm(fr.points[-1]) - 1.0) < 1e-4


def test_white_hole_horizon(wh):
    rep, _ = wh
    r = np.linalg.norm(rep.curve.vertices, axis=1)
    assert np.max(np.abs(r - 1.0)) < 1e-6
    assert rep.kind == "WhiteHole" and rep.char_residual < 1e-8
    assert abs(abs(rep.return_map_slope) - 1.0) > 1e-3
    assert rep.drift < 1e-6


def test_horizon_is_flow_invariant(wh):
    rep, _ = wh
    m = draining_bathtub(1.0, 0.5)
    fr = flow_field(CharacteristicField(m, rep.family), rep.curve.vertices[0], rep.curve.perimeter(),
                    orientation=rep.orientation)
    assert np.max(np.abs(np.linalg.norm(fr.points, axis=1) - 1.0)) < 1e-6


def test_section_angle_does_not_matter(wh):
    rep, _ = wh
    other, _ = _finder(draining_bathtub(1.0, 0.5), section_angle=2.0)
    assert _polar_distance(rep.curve, other.curve) < 1e-6


def test_black_hole_horizon():
    rep, _ = _finder(draining_bathtub(-1.0, 0.5))
    assert rep.kind == "BlackHole"
    assert np.max(np.abs(np.linalg.norm(rep.curve.vertices, axis=1) - 1.0)) < 1e-6


def test_sign_changing_swirl_has_no_horizon():
    with pytest.raises(NoSignChange):
        _finder(draining_bathtub(1.0, {"b1": 0.5}))


def test_classification_and_residuals():
    assert classify_horizon(draining_bathtub(1.0, 0.0), circle(1.0))[0] == "WhiteHole"
    assert classify_horizon(draining_bathtub(-1.0, 0.0), circle(1.0))[0] == "BlackHole"
    with pytest.raises(NotCharacteristic):
        classify_horizon(FlatMetric(2), circle(1.0))
    m = draining_bathtub(1.0, 0.5)
    assert is_characteristic_curve(m, circle(1.0)).max < 1e-10
    assert is_characteristic_curve(m, circle(1.2)).max > 0.01
    kc = kerr_cylindrical(1.0, 0.6).meridional()
    assert is_characteristic_curve(kc, kerr_horizon_curve(1.0, 0.6)).max < 1e-9


def test_ergosphere_characteristic_checks():
    assert ergosphere_noncharacteristic_check(draining_bathtub(1.0, 0.5), circle(np.sqrt(1.25))).min_form > 0
    assert ergosphere_noncharacteristic_check(draining_bathtub(1.0, 0.0), circle(1.0)).everywhere
    kc = kerr_cylindrical(1.0, 0.6)
    assert ergosphere_noncharacteristic_check(kc.meridional(), outer_ergosphere(kc)).everywhere


def test_pure_kerr_is_refused():
    kc = kerr_cylindrical(1.0, 0.6)
    ergo = outer_ergosphere(kc)
    with pytest.raises(ErgosphereCharacteristic):
        rotating_horizon(kc, ergo, scaled_curve(ergo, 0.8, (0.0, 0.0)))


def test_rotating_reduction_matches_planar(wh):
    rep, ergo = wh
    rot = rotating_horizon(draining_bathtub(1.0, 0.5), ergo, scaled_curve(ergo, 0.8, (0.0, 0.0)))
    assert rot.tag == "rotating"
    assert _polar_distance(rot.curve, rep.curve) < 1e-6


def test_perturbed_kerr_has_a_limit_cycle_inside_the_restricted_ergosphere():
    dv, dj = tangential_delta(1.0)
    m = PerturbedFlowMetric(KerrMeridionalMetric(1.0, 0.6), dv, 0.05, dj)
    bbox = (np.array([-2.5, -2.5]), np.array([2.5, 2.5]))
    ergo = outer_ergosphere(m, bbox)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        rep = rotating_horizon(m, ergo, scaled_curve(ergo, 0.8, (0.0, 0.0)))
    assert rep.char_residual < 1e-8 and rep.kind == "BlackHole"
    assert np.all(ergo.contains(rep.curve.vertices))
    assert abs(kerr_r(rep.curve.vertices, 0.6).mean() - 1.8) < 0.02
