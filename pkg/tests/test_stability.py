import numpy as np
import pytest

from artbh.errors import ConstructionFailed
from artbh.horizon import circle, is_characteristic_curve
from artbh.metrics import draining_bathtub, kerr_cylindrical
from artbh.stability import (analyse_member, bathtub_family, horizon_persistence_scan, outer_ergosphere,
                             preserved_family_demo, residual_scan, schwarzschild_type_test)


def test_schwarzschild_type_classification():
    assert schwarzschild_type_test(kerr_cylindrical(1.0, 0.6)).is_schwarzschild_type
    assert schwarzschild_type_test(draining_bathtub(1.0, 0.0)).is_schwarzschild_type
    assert not schwarzschild_type_test(draining_bathtub(1.0, 0.5)).is_schwarzschild_type


def test_family_members():
    fam = bathtub_family(1.0, 0.0, 1.0, 0.5)
    assert fam(0.0) is fam.base
    x = np.array([[0.3, 1.1], [-1.4, 0.2]])
    assert np.allclose(fam(0.3).g_up(x), draining_bathtub(1.0, 0.3).g_up(x), atol=1e-14)
    r = np.linalg.norm(outer_ergosphere(fam(0.3)).vertices, axis=1)
    assert np.max(np.abs(r - np.sqrt(1.09))) < 1e-6
    with pytest.raises(ValueError):
        fam(0.6)


@pytest.fixture(scope="module")
def stable_scan():
    return horizon_persistence_scan(bathtub_family(1.0, 0.5, 1.0, 0.2), [0.0, 0.05, 0.1, 0.2])


def test_constant_swirl_perturbations_keep_the_horizon(stable_scan):
    assert stable_scan.verdict == "StablePersistence"
    for o in stable_scan.outcomes:
        assert o.kind == "WhiteHole"
        assert abs(o.radius_min - 1) < 1e-6 and abs(o.radius_max - 1) < 1e-6
    gaps = [o.ergosphere_gap for o in stable_scan.outcomes]
    assert np.all(np.diff(gaps) > 0)
    for o in stable_scan.outcomes:
        B = 0.5 + o.eps
        assert o.ergosphere_gap == pytest.approx(np.hypot(1.0, B) - 1.0, abs=1e-6)


def test_sign_changing_swirl_destroys_the_horizon():
    scan = horizon_persistence_scan(bathtub_family(1.0, 0.0, {"b1": 1.0}, 0.1), [0.0, 0.05, 0.1])
    assert scan.verdict == "UnstableLoss"
    base, *rest = scan.outcomes
    assert base.horizon and base.schwarzschild_type and base.residual < 1e-8
    for o in rest:
        assert not o.horizon and o.reason.startswith("NoSignChange")
        assert o.residual_floor > 1e-3


def test_single_eps_scan_is_the_base_outcome():
    scan = horizon_persistence_scan(bathtub_family(1.0, 0.5, 1.0), [0.0])
    assert scan.verdict == "StablePersistence" and len(scan.outcomes) == 1
    with pytest.raises(ValueError):
        horizon_persistence_scan(bathtub_family(1.0, 0.5, 1.0), [0.1])


def test_residual_floor_near_characteristic_circle():
    m = draining_bathtub(1.0, 0.0)
    ergo = outer_ergosphere(m)
    floor, off = residual_scan(m, ergo, 0.1)
    assert floor < 1e-8 and abs(off) < 1e-3
    # a tangential swirl never changes the normal form on r = A (it depends on the radial velocity only),
    # but the curves hugging the moved ergosphere are far from characteristic
    pm = bathtub_family(1.0, 0.0, {"b1": 1.0}, 0.1)(0.05)
    assert is_characteristic_curve(pm, circle(1.0)).max < 1e-12
    floor, _ = residual_scan(pm, outer_ergosphere(pm), 0.1)
    assert floor > 1e-3


def test_gap_grows_with_swirl():
    gaps = [analyse_member(draining_bathtub(1.0, B)).ergosphere_gap for B in (0.1, 0.2, 0.4)]
    assert np.allclose(gaps, [np.hypot(1, B) - 1 for B in (0.1, 0.2, 0.4)], atol=1e-6)
    assert gaps[0] < gaps[1] < gaps[2]


def test_preserved_family_demo():
    res = preserved_family_demo(lambda e: 1.0 + e, [0.0, 0.1, 0.2])
    assert res.verdict == "PreservedByConstruction"
    for e, o in zip(res.eps, res.outcomes):
        assert o.residual < 1e-10 and abs(o.radius_mean - (1 + e)) < 1e-6
        assert schwarzschild_type_test(draining_bathtub(1.0 + e, 0.0)).is_schwarzschild_type
    with pytest.raises(ConstructionFailed):
        preserved_family_demo(lambda e: 1.0 + e, [0.0, 0.1],
                              extra_B=lambda e: {"b1": e} if e > 0 else 0.0)
