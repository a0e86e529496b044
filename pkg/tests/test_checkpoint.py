import numpy as np
import pytest

from jessi.tensor import CheckpointError, load_checkpoint, save_checkpoint


def test_round_trip_with_meta(tmp_path):
    tensors = {"a.weight": np.arange(6, dtype=np.float32).reshape(2, 3), "b": np.float32([1.5])}
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, tensors, {"k": [1, 2], "name": "x"})
    loaded, meta = load_checkpoint(path)
    assert list(loaded) == ["a.weight", "b"]
    np.testing.assert_array_equal(loaded["a.weight"], tensors["a.weight"])
    assert meta == {"k": [1, 2], "name": "x"}


def test_layout_is_the_documented_one(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, {"w": np.float32([[1, 2]])})
    raw = path.read_bytes()
    assert raw[:6] == b"JESSI1"
    assert raw[6:10] == (1).to_bytes(4, "little") and raw[10:11] == b"w"
    assert raw[11:15] == (2).to_bytes(4, "little")
    assert np.frombuffer(raw[23:], dtype="<f4").tolist() == [1.0, 2.0]


def test_rejects_bad_header_and_truncation(tmp_path):
    path = tmp_path / "m.ckpt"
    path.write_bytes(b"NOPE")
    with pytest.raises(CheckpointError):
        load_checkpoint(path)
    save_checkpoint(path, {"w": np.zeros((4, 4), np.float32)})
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(path)


def test_identical_bytes_on_resave(tmp_path):
    t = {"x": np.linspace(0, 1, 10, dtype=np.float32)}
    save_checkpoint(tmp_path / "1", t, {"b": 1, "a": 2})
    save_checkpoint(tmp_path / "2", t, {"a": 2, "b": 1})
    assert (tmp_path / "1").read_bytes() == (tmp_path / "2").read_bytes()
