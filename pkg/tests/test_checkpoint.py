import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from gblsdetect import checkpoint
from gblsdetect.checkpoint import CheckpointError


def _tensors(rng):
    return {"b.scalar": np.array(3.5), "a.matrix": rng.normal(size=(3, 4)), "c.vec": np.arange(5.0)}


def test_roundtrip(tmp_path, rng):
    t = _tensors(rng)
    checkpoint.save(tmp_path / "m.ckpt", t, "deadbeef")
    back, digest = checkpoint.load(tmp_path / "m.ckpt")
    assert digest == "deadbeef"
    assert set(back) == set(t)
    for k in t:
        assert back[k].shape == t[k].shape
        np.testing.assert_array_equal(back[k], t[k])


@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=0, max_dims=3, max_side=4), elements=st.floats(-1e6, 1e6)))
def test_roundtrip_bit_exact(arr):
    back, _ = checkpoint.loads(checkpoint.dumps({"x": arr}, ""))
    assert back["x"].tobytes() == np.ascontiguousarray(arr).tobytes()


def test_layout_is_documented(rng):
    buf = checkpoint.dumps({"w": np.array([[1.0, 2.0]])}, "ab")
    assert buf[:8] == b"GBLSCKPT"
    assert struct.unpack("<I", buf[8:12])[0] == checkpoint.VERSION
    assert struct.unpack("<I", buf[12:16])[0] == 2 and buf[16:18] == b"ab"
    assert struct.unpack("<I", buf[18:22])[0] == 1  # tensor count
    # name, rank, dims, payload
    assert buf[22:27] == struct.pack("<I", 1) + b"w"
    assert struct.unpack("<I", buf[27:31])[0] == 2
    assert struct.unpack("<2Q", buf[31:47]) == (1, 2)
    assert np.frombuffer(buf[47:], "<f8").tolist() == [1.0, 2.0]


def test_deterministic_bytes(rng):
    t = _tensors(rng)
    assert checkpoint.dumps(t, "x") == checkpoint.dumps(dict(reversed(list(t.items()))), "x")


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda b: b"XXXXXXXX" + b[8:], "magic"),
        (lambda b: b[:8] + struct.pack("<I", 99) + b[12:], "version"),
        (lambda b: b[:-3], "truncated"),
        (lambda b: b + b"\x00", "trailing"),
    ],
)
def test_corruption_detected(rng, mutate, message):
    buf = checkpoint.dumps(_tensors(rng), "d")
    with pytest.raises(CheckpointError, match=message):
        checkpoint.loads(mutate(buf))


def test_nonfinite_payload_rejected():
    buf = bytearray(checkpoint.dumps({"x": np.array([1.0])}, ""))
    buf[-8:] = struct.pack("<d", float("nan"))
    with pytest.raises(CheckpointError, match="non-finite"):
        checkpoint.loads(bytes(buf))


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        checkpoint.load(tmp_path / "nope.ckpt")
