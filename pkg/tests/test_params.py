"""Parameter store and the binary weight format."""

import struct

import numpy as np
import pytest

from panolayout.errors import ValidationError
from panolayout.params import ParamStore, load_dopw, save_dopw


def _sample_entries(rng):
    return {
        "backbone.stem.weight": rng.normal(size=(8, 3, 3, 3)),
        "head.depth.bias": rng.normal(size=(1,)),
        "csda.offsets": rng.normal(size=(4, 8, 9, 2)),
    }


def test_save_load_save_is_bit_identical(tmp_path, rng):
    entries = _sample_entries(rng)
    p1, p2 = tmp_path / "a.dopw", tmp_path / "b.dopw"
    save_dopw(p1, entries)
    save_dopw(p2, load_dopw(p1))
    assert p1.read_bytes() == p2.read_bytes()


def test_values_roundtrip_at_f32_precision(tmp_path, rng):
    entries = _sample_entries(rng)
    path = tmp_path / "w.dopw"
    save_dopw(path, entries)
    loaded = load_dopw(path)
    assert list(loaded) == list(entries)   # insertion order preserved
    for name, value in entries.items():
        assert loaded[name].dtype == np.float64
        np.testing.assert_array_equal(loaded[name],
                                      value.astype(np.float32).astype(np.float64))


def test_header_layout(tmp_path):
    path = tmp_path / "w.dopw"
    save_dopw(path, {"x": np.zeros((2, 3))})
    raw = path.read_bytes()
    assert raw[:4] == b"DOPW"
    version, count = struct.unpack_from("<II", raw, 4)
    assert (version, count) == (1, 1)
    name_len = struct.unpack_from("<I", raw, 12)[0]
    assert raw[16:16 + name_len] == b"x"


def test_load_rejects_bad_magic(tmp_path):
    path = tmp_path / "w.dopw"
    save_dopw(path, {"x": np.zeros(3)})
    raw = bytearray(path.read_bytes())
    raw[:4] = b"NOPE"
    path.write_bytes(bytes(raw))
    with pytest.raises(ValidationError):
        load_dopw(path)


def test_load_rejects_truncation_and_trailing(tmp_path):
    path = tmp_path / "w.dopw"
    save_dopw(path, {"x": np.arange(6.0).reshape(2, 3)})
    raw = path.read_bytes()
    path.write_bytes(raw[:-5])
    with pytest.raises(ValidationError):
        load_dopw(path)
    path.write_bytes(raw + b"\x00\x00")
    with pytest.raises(ValidationError):
        load_dopw(path)


def test_load_rejects_duplicate_names(tmp_path):
    # hand-roll a two-entry file that repeats the same tensor name
    buf = bytearray(b"DOPW" + struct.pack("<II", 1, 2))
    for _ in range(2):
        buf += struct.pack("<I", 1) + b"x"
        buf += struct.pack("<I", 1) + struct.pack("<I", 2)
        buf += np.zeros(2, dtype="<f4").tobytes()
    path = tmp_path / "dup.dopw"
    path.write_bytes(bytes(buf))
    with pytest.raises(ValidationError):
        load_dopw(path)


def test_store_rejects_duplicates_and_unknowns():
    store = ParamStore()
    store.add("w", np.zeros((2, 2)))
    with pytest.raises(ValidationError):
        store.add("w", np.zeros((2, 2)))
    with pytest.raises(ValidationError):
        store["missing"]
    assert "w" in store and "missing" not in store


def test_store_set_preserves_shape():
    store = ParamStore()
    store.add("w", np.zeros((2, 2)))
    store.set("w", np.ones((2, 2)))
    np.testing.assert_array_equal(store["w"], 1.0)
    with pytest.raises(ValidationError):
        store.set("w", np.zeros(3))


def test_store_gradient_accumulation():
    store = ParamStore()
    store.add("w", np.zeros((2,)))
    store.accumulate("w", np.array([1.0, 2.0]))
    store.accumulate("w", np.array([0.5, 0.5]))
    np.testing.assert_array_equal(store.grad("w"), [1.5, 2.5])
    with pytest.raises(ValidationError):
        store.accumulate("w", np.zeros(3))
    store.zero_grads()
    np.testing.assert_array_equal(store.grad("w"), 0.0)


def test_store_scalar_values_become_vectors():
    # contract: stored tensors always have ndim >= 1 so the binary format
    # never needs a 0-dim special case
    store = ParamStore()
    v = store.add("b", 0.25)
    assert v.shape == (1,)


def test_store_file_roundtrip(tmp_path, rng):
    store = ParamStore()
    for name, value in _sample_entries(rng).items():
        store.add(name, value.astype(np.float32))
    path = tmp_path / "store.dopw"
    store.save(path)
    back = ParamStore.load(path)
    assert back.names() == store.names()
    for name, value in store.items():
        np.testing.assert_array_equal(back[name], value)
