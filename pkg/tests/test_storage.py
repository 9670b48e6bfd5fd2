import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from albedo_lab.coefficients import PhaseFunction, ScatteringField, make_phantom
from albedo_lab.storage import (canonical_json, config_hash, load_array, load_field, provenance, save_array,
                                save_field)


@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 4)),
              elements=st.floats(allow_nan=False, width=64)))
@settings(max_examples=25, deadline=None)
def test_array_roundtrip(tmp_path_factory, a):
    stem = tmp_path_factory.mktemp("arr") / "a"
    raw, side = save_array(stem, a, {"note": "x"})
    back, meta = load_array(stem)
    assert np.array_equal(back, a) and meta["shape"] == list(a.shape) and meta["note"] == "x"
    assert raw.read_bytes() == a.astype("<f8").tobytes()


def test_field_roundtrip(tmp_path):
    pair = make_phantom("smooth-bump", N=9)
    save_field(tmp_path / "s", pair.sigma)
    s = load_field(tmp_path / "s")
    assert np.array_equal(s.values, pair.sigma.values) and s.grid == pair.grid
    k = ScatteringField(pair.grid, pair.kappa.amplitude, PhaseFunction("hg", 3, 0.4))
    save_field(tmp_path / "k", k)
    k2 = load_field(tmp_path / "k")
    assert k2.phase.params() == {"name": "hg", "g": 0.4}
    meta = json.loads((tmp_path / "k.json").read_text())
    assert meta["grid"]["spacing"] == pytest.approx(0.25) and meta["kind"] == "scattering"


def test_canonical_json_is_stable():
    a = canonical_json({"b": np.float64(1.5), "a": [np.int64(2), float("nan")], "c": np.bool_(True)})
    b = canonical_json({"c": True, "a": [2, None], "b": 1.5})
    assert a == b


def test_config_hash_and_provenance():
    assert config_hash({"x": 1, "y": [1, 2]}) == config_hash({"y": [1, 2], "x": 1})
    assert config_hash({"x": 1}) != config_hash({"x": 2})
    p = provenance({"x": 1}, 7)
    assert p["seed"] == 7 and len(p["config_hash"]) == 64 and p["version"]
