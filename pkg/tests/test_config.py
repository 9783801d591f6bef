import numpy as np
import pytest
from hypothesis import given, strategies as st

from artbh import config as C
from artbh.errors import ConfigError
from artbh.metrics import BathtubMetric, FlatMetric, KerrSchildMetric, PerturbedFlowMetric


def test_defaults_round_trip():
    cfg = C.resolve({})
    assert C.loads(C.dumps(cfg)) == cfg


@given(st.floats(-3, 3), st.floats(-2, 2), st.floats(1e-12, 1e-3), st.integers(0, 2 ** 31),
       st.lists(st.floats(0, 0.5), min_size=1, max_size=4))
def test_round_trip_preserves_values(A, B, tol, seed, eps):
    cfg = C.resolve({"metric": {"A": A, "B": {"b0": B, "b2": 0.1}}, "run": {"tol": tol, "seed": seed},
                     "stability": {"eps": eps}})
    assert C.loads(C.dumps(cfg)) == cfg


@pytest.mark.parametrize("raw", [
    {"metric": {"colour": 1}},
    {"nonsense": {}},
    {"run": {"tol": 0.0}},
    {"run": {"tol": -1e-3}},
    {"wavesim": {"h": -0.1}},
    {"metric": {"family": "wormhole"}},
    {"metric": {"B": {"q1": 0.1}}},
    {"run": {"seed": 1.5}},
    {"ergosphere": {"bbox": [1, 1, 0, 0]}},
    {"wavesim": {"dtype": "float16"}},
])
def test_invalid_entries_are_rejected(raw):
    with pytest.raises(ConfigError):
        C.resolve(raw)


def test_malformed_toml_and_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        C.loads("[run\nseed=1")
    with pytest.raises(ConfigError):
        C.load(tmp_path / "missing.toml")


def test_overrides():
    cfg = C.apply_overrides(C.resolve({}), tol=1e-9, grid=64, out="x", quiet=True)
    assert cfg["run"]["tol"] == 1e-9 and cfg["wavesim"]["h"] == 1 / 64
    assert cfg["run"]["out"] == "x" and cfg["run"]["quiet"]
    with pytest.raises(ConfigError):
        C.apply_overrides(C.resolve({}), tol=-1.0)
    with pytest.raises(ConfigError):
        C.apply_overrides(C.resolve({}), grid=0)


def test_build_metric_families():
    x = np.array([[1.3, 0.4]])
    assert isinstance(C.build_metric(C.resolve({"metric": {"family": "flat"}})), FlatMetric)
    bt = C.build_metric(C.resolve({"metric": {"A": 1.0, "B": 0.5}}))
    assert isinstance(bt, BathtubMetric)
    ac = C.build_metric(C.resolve({"metric": {"family": "acoustic", "A": 1.0, "B": 0.5}}))
    assert np.allclose(ac.g_up(x), bt.g_up(x), atol=1e-14)
    assert isinstance(C.build_metric(C.resolve({"metric": {"family": "kerr", "a": 0.6}})), KerrSchildMetric)
    pm = C.build_metric(C.resolve({"metric": {"family": "perturbation", "B": 0.0, "delta_B": 1.0, "eps": 0.2}}))
    assert isinstance(pm, PerturbedFlowMetric)
    assert np.allclose(pm.g_up(x), C.build_metric(C.resolve({"metric": {"B": 0.2}})).g_up(x), atol=1e-14)
    g = C.build_metric(C.resolve({"metric": {"family": "gordon", "A": 0.0, "B": 0.0, "n_refr": 2.0}}))
    assert np.allclose(g.g_up(x)[0], np.diag([4.0, -1.0, -1.0]), atol=1e-14)
