import numpy as np
import pytest
from hypothesis import given, strategies as st

from artbh.curves import hausdorff
from artbh.ergosphere import (delta, field_for, find_ergosphere, g00_covariant, kerr_delta1,
                              kerr_delta1_scale, kerr_ergosphere_curves, kerr_horizon_curve, restricted_delta1,
                              verify_kerr)
from artbh.metrics import FlatMetric, draining_bathtub, kerr_cylindrical, kerr_kerr_schild, kerr_r


def test_delta_values():
    assert delta(FlatMetric(2), np.array([0.3, 0.4])) == pytest.approx(1.0)
    m = draining_bathtub(1.0, 1.0)
    assert abs(delta(m, np.array([np.sqrt(2), 0.0]))) < 1e-12
    assert delta(m, np.array([0.0, 1.0])) == pytest.approx(-1.0)


def test_schwarzschild_g00():
    m = kerr_kerr_schild(1.0, 0.0)
    assert abs(g00_covariant(m, np.array([2.0, 0.0, 0.0]))) < 1e-12
    assert g00_covariant(m, np.array([0.0, 4.0, 0.0])) == pytest.approx(0.5)


def test_g00_sign_matches_delta_sign(rng):
    m = draining_bathtub(1.0, 0.7)
    r = rng.uniform(0.2, 3.0, 1000)
    t = rng.uniform(0, 2 * np.pi, 1000)
    x = np.stack([r * np.cos(t), r * np.sin(t)], 1)
    d, g = delta(m, x), g00_covariant(m, x)
    keep = np.abs(d) > 1e-12
    assert np.all(np.sign(d[keep]) == np.sign(g[keep]))


def test_kerr_r_values():
    assert kerr_r(np.array([0.0, 1.5]), 0.6) == pytest.approx(1.5)
    assert kerr_r(np.array([1.0, 0.0]), 0.6) == pytest.approx(0.8)
    assert kerr_r(np.array([1.2, 0.7]), 0.0) == pytest.approx(np.hypot(1.2, 0.7))


@given(st.floats(0.2, 4), st.floats(-4, 4), st.sampled_from([0.0, 0.3, 0.6, 0.9]))
def test_closed_form_delta1_matches_metric_block(rho, z, a):
    if kerr_r(np.array([rho, z]), a) < 0.2:
        return
    mc = kerr_cylindrical(1.0, a)
    got = restricted_delta1(mc, rho, z)
    assert got == pytest.approx(kerr_delta1(1.0, a, rho, z), abs=1e-11 * kerr_delta1_scale(1.0, a, rho, z))


def test_kerr_delta1_vanishes_on_horizons_only():
    a = 0.6
    c = kerr_horizon_curve(1.0, a, "outer").vertices
    assert np.max(np.abs(kerr_delta1(1.0, a, c[:, 0], c[:, 1]))) < 1e-10
    al = np.linspace(0.1, np.pi - 0.1, 20)
    r = 1.0
    mid = np.stack([np.sqrt(r * r + a * a) * np.sin(al), r * np.cos(al)], 1)
    assert np.min(np.abs(kerr_delta1(1.0, a, mid[:, 0], mid[:, 1]))) > 1e-3


def test_kerr_ergosphere_closed_forms():
    c = kerr_ergosphere_curves(1.0, 0.6)
    r = kerr_r(c.vertices, 0.6)
    eq = np.argmin(np.abs(c.vertices[:, 1]))
    assert r[eq] == pytest.approx(2.0, abs=1e-4)
    pole = np.argmin(np.abs(c.vertices[:, 0]))
    assert r[pole] == pytest.approx(1.8, abs=1e-3)
    c0 = kerr_ergosphere_curves(1.0, 0.0)
    assert np.allclose(np.linalg.norm(c0.vertices, axis=1), 2.0, atol=1e-12)


def test_bathtub_ergosphere_contour():
    res = find_ergosphere(draining_bathtub(1.0, 1.0), ((-3, -3), (3, 3)), 0.01)
    assert len(res.curves) == 1
    assert np.max(np.abs(np.linalg.norm(res.curves[0].vertices, axis=1) - np.sqrt(2))) < 1e-4


def test_contour_residual_refines_at_second_order():
    f = field_for(draining_bathtub(1.0, 0.5))
    from artbh.curves import extract_contour, max_midpoint_residual
    res = [max_midpoint_residual(f, extract_contour(f, ((-2, -2), (2, 2)), h, resample=False).curves[0].vertices)
           for h in (0.1, 0.05)]
    assert res[0] / res[1] >= 3.5


@pytest.mark.parametrize("metric", [draining_bathtub(1.0, 0.5), draining_bathtub(-1.0, {"b0": 0.5, "b1": 0.2})])
def test_delta_and_g00_zero_sets_coincide(metric):
    h = 0.02
    bbox = ((-2, -2), (2, 2))
    a = find_ergosphere(metric, bbox, h, "Delta").curves[0]
    b = find_ergosphere(metric, bbox, h, "G00").curves[0]
    assert hausdorff(a.vertices, b.vertices) < 2 * h


@pytest.mark.parametrize("a", [0.0, 0.6, 0.9])
def test_verify_kerr(a):
    v = verify_kerr(1.0, a)
    assert max(v.max_delta1.values()) < 1e-10
    assert max(v.max_delta1_metric.values()) < 1e-10
    assert max(v.contour_error.values()) < 1e-6
    if a == 0.0:
        assert v.ergosphere_offset < 1e-6
    else:
        assert set(v.contour_error) == {"r_plus", "r_minus"}
