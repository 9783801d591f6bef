import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.integrate import quad, solve_ivp

from artbh.bicharacteristics import (PhaseState, forward_cone_projections, future_null_covector, hamiltonian,
                                     influence_fan, integrate_bicharacteristic, null_seed_suite,
                                     null_spatial_directions, sample_seeds, timelike_test, trapped_condition_check)
from artbh.errors import DriftExceeded, NotInsideErgosphere, PreconditionError
from artbh.horizon import PLUS, CharacteristicField, circle, flow_field
from artbh.metrics import FlatMetric, draining_bathtub


def test_hamiltonian_values():
    f = FlatMetric(2)
    assert hamiltonian(f, [0, 0], [1, 1, 0]) == 0.0
    assert hamiltonian(f, [0, 0], [1, 0, 0]) == 1.0
    assert hamiltonian(draining_bathtub(1, 0), [2, 0], [0, 0, 1]) == pytest.approx(-1.0)


def test_flat_ray_is_a_straight_line():
    p = integrate_bicharacteristic(FlatMetric(2), PhaseState(0.0, np.zeros(2), 1.0, np.array([1.0, 0.0])), 1.5)
    assert np.allclose(p.x0, 2 * p.s, atol=1e-13)
    assert np.allclose(p.x[:, 0], -2 * p.s, atol=1e-13)
    assert np.allclose(p.x[:, 1], 0, atol=1e-15)
    assert p.xi0_drift == 0.0


def test_non_null_start_is_rejected():
    with pytest.raises(PreconditionError):
        integrate_bicharacteristic(FlatMetric(2), PhaseState(0.0, np.zeros(2), 1.0, np.array([0.5, 0.0])), 1.0)


def _outgoing_radial(A, r0):
    m = draining_bathtub(A, 0.0)
    x = np.array([r0, 0.0])
    xi = future_null_covector(m.g_up(x), [-1.0, 0.0])
    return m, PhaseState(0.0, x, xi[0], xi[1:])


def test_radial_null_ray_matches_characteristic_speed():
    # a radial sound ray in the B=0 bathtub obeys dr/dx0 = A/r + 1 (outgoing)
    A = 1.0
    m, st0 = _outgoing_radial(A, 1.5)
    p = integrate_bicharacteristic(m, st0, 0.5, tol=1e-12)
    r = np.hypot(*p.x.T)
    assert r[-1] > r[0] and np.allclose(p.x[:, 1], 0, atol=1e-12)
    t_oracle = quad(lambda s: s / (A + s), r[0], r[-1], epsabs=1e-14)[0]
    assert abs(p.x0[-1] - t_oracle) < 1e-6


def test_fixed_step_error_drops_at_high_order():
    A = 1.0
    m, st0 = _outgoing_radial(A, 1.5)
    err = []
    for hstep in (0.05, 0.025):
        p = integrate_bicharacteristic(m, st0, 0.5, fixed_h=hstep)
        r = np.hypot(*p.x.T)
        err.append(abs(p.x0[-1] - quad(lambda s: s / (A + s), r[0], r[-1], epsabs=1e-15)[0]))
    assert err[0] / err[1] >= 8


@given(st.floats(0.6, 2.5), st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi))
def test_hamiltonian_and_xi0_are_conserved(r, th, ang):
    m = draining_bathtub(1.0, 0.5)
    x = np.array([r * np.cos(th), r * np.sin(th)])
    xi = future_null_covector(m.g_up(x), [np.cos(ang), np.sin(ang)])
    if not np.all(np.isfinite(xi)):
        return
    p = integrate_bicharacteristic(m, PhaseState(0.0, x, xi[0], xi[1:]), 1.0, mode="general")
    assert p.xi0_drift <= 1e-14
    if p.stop_reason == "done":
        assert p.h_drift <= 1e-8


def test_null_mode_raises_on_drift():
    m, st0 = _outgoing_radial(1.0, 1.5)
    with pytest.raises(DriftExceeded):
        integrate_bicharacteristic(m, st0, 0.5, fixed_h=0.25, H_tol=1e-16 + abs(float(
            hamiltonian(m, st0.x, st0.pack()[3:]))))


def test_null_direction_counts():
    assert null_spatial_directions(FlatMetric(2), [0.5, 0.5]).count == 0
    m = draining_bathtub(1.0, 1.0)
    nd = null_spatial_directions(m, [1.0, 0.0])
    assert nd.count == 2
    G = m.g_up(np.array([1.0, 0.0]))[1:, 1:]
    assert np.max(np.abs(np.einsum("ij,jk,ik->i", nd.etas, G, nd.etas))) < 1e-12
    on = null_spatial_directions(m, [np.sqrt(2), 0.0])
    assert on.count == 1 and on.double


@given(st.floats(0.2, 3.0), st.floats(0, 2 * np.pi))
def test_direction_count_follows_sign_of_delta(r, th):
    m = draining_bathtub(1.0, 0.5)
    nd = null_spatial_directions(m, [r * np.cos(th), r * np.sin(th)])
    scale = max(1.0, 1.25 / r ** 2) ** 2
    if nd.delta / scale > 1e-9:
        assert nd.count == 0
    elif nd.delta / scale < -1e-9:
        assert nd.count == 2


def test_timelike():
    f = FlatMetric(2)
    assert timelike_test(f, [0, 0], [1, 0, 0])
    assert not timelike_test(f, [0, 0], [1, 2, 0])
    # radially inward at unit sound speed inside the white hole cannot be time-like
    assert not timelike_test(draining_bathtub(1.0, 0.0), [0.5, 0.0], [1.0, -1.0, 0.0])


def test_forward_cones_point_out_of_white_hole_and_into_black_hole():
    x = np.array([0.5, 0.0])
    out = forward_cone_projections(draining_bathtub(1.0, 0.0), x).directions
    assert np.all(out[:, 0] > 0)
    inn = forward_cone_projections(draining_bathtub(-1.0, 0.0), x).directions
    assert np.all(inn[:, 0] < 0)
    with pytest.raises(NotInsideErgosphere):
        forward_cone_projections(draining_bathtub(1.0, 0.0), np.array([2.0, 0.0]))


def test_one_cone_edge_tangent_on_horizon():
    d = forward_cone_projections(draining_bathtub(1.0, 0.5), np.array([1.0, 0.0]), merge_tol=1.0).directions
    assert np.min(np.abs(d[:, 0])) < 1e-12


def test_trapped_condition():
    assert trapped_condition_check(draining_bathtub(1.0, 0.5), circle(0.5)) == "AllOutward"
    assert trapped_condition_check(draining_bathtub(-1.0, 0.5), circle(0.5)) == "AllInward"
    with pytest.raises(NotInsideErgosphere):
        trapped_condition_check(draining_bathtub(1.0, 0.0), circle(1.2))


def test_flat_influence_fan_is_the_light_circle():
    fan = influence_fan(FlatMetric(2), [[0.0, 0.0]], 1.0, n_rays=256)
    env = fan.envelope()
    assert np.max(np.abs(np.linalg.norm(env, axis=1) - 1.0)) < 1e-3


def test_influence_fans_respect_the_horizon():
    seed = [[0.5, 0.0]]
    wh = influence_fan(draining_bathtub(1.0, 0.0), seed, 2.0, n_rays=32)
    assert wh.max_radius() > 1.0
    bh = influence_fan(draining_bathtub(-1.0, 0.0), seed, 2.0, n_rays=32)
    assert bh.max_radius() <= 1.0 + 1e-3


def test_projected_flow_matches_scalar_oracle():
    A, B = 1.0, 0.5
    fr = flow_field(CharacteristicField(draining_bathtub(A, B), PLUS), [1.1, 0.0], 20.0, tol=1e-12)
    r = np.hypot(*fr.points.T)
    th = np.unwrap(np.arctan2(fr.points[:, 1], fr.points[:, 0]))
    rhs = lambda t, y: (A * A - y * y) / (A * B / y + np.sqrt(A * A + B * B - y * y))  # noqa: E731
    sol = solve_ivp(rhs, (th[0], th[-1]), [r[0]], rtol=1e-12, atol=1e-13)
    assert abs(sol.y[0, -1] - r[-1]) < 1e-6
    assert abs(r[-1] - A) < 1e-4


def test_tangent_circles_at_zero_rotation():
    fr = flow_field(CharacteristicField(draining_bathtub(1.0, 0.0), PLUS), [0.6, 0.0], 3.0, tol=1e-12,
                    orientation=-1.0)
    r = np.hypot(*fr.points.T)
    th = np.arctan2(fr.points[:, 1], fr.points[:, 0])
    # both circles r = cos(th - th0) through (0.6, 0) have th0 = +-arccos(0.6); the flow follows one
    err = min(np.max(np.abs(r - np.cos(th - th0))) for th0 in (np.arccos(0.6), -np.arccos(0.6)))
    assert len(r) > 20 and err < 1e-6


@pytest.mark.parametrize("metric", [FlatMetric(2), draining_bathtub(1.0, 0.5)])
def test_seed_suite_small(metric):
    X, D = sample_seeds(metric, 12, seed=3)
    X2, D2 = sample_seeds(metric, 12, seed=3)
    assert np.array_equal(X, X2) and np.array_equal(D, D2)
    res = null_seed_suite(metric, X, D)
    assert max(r.h_drift for r in res) <= 1e-8
    assert max(r.xi0_drift for r in res) <= 1e-14
