import numpy as np
import pytest

from relsql.nn.checkpoint import CheckpointError, load_checkpoint, save_checkpoint


def params():
    rng = np.random.default_rng(0)
    return {"b": rng.normal(size=(3,)).astype(np.float32), "a.w": rng.normal(size=(2, 4)),
            "ids": np.arange(5, dtype=np.int64)}


def test_round_trip(tmp_path):
    p = params()
    save_checkpoint(tmp_path / "m.ckpt", p, {"note": "x"})
    back, header = load_checkpoint(tmp_path / "m.ckpt")
    assert header["note"] == "x"
    assert sorted(back) == sorted(p)
    for k in p:
        assert back[k].dtype == p[k].dtype
        np.testing.assert_array_equal(back[k], p[k])


def test_bytes_are_stable(tmp_path):
    save_checkpoint(tmp_path / "a", params(), {"k": 1})
    save_checkpoint(tmp_path / "b", params(), {"k": 1})
    assert (tmp_path / "a").read_bytes() == (tmp_path / "b").read_bytes()


def test_bad_magic(tmp_path):
    (tmp_path / "x").write_bytes(b"NOTACKPT" + b"\0" * 20)
    with pytest.raises(CheckpointError, match="not a checkpoint"):
        load_checkpoint(tmp_path / "x")


def test_truncated_and_trailing(tmp_path):
    save_checkpoint(tmp_path / "m", params(), {})
    raw = (tmp_path / "m").read_bytes()
    (tmp_path / "t").write_bytes(raw[:-4])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(tmp_path / "t")
    (tmp_path / "e").write_bytes(raw + b"\0")
    with pytest.raises(CheckpointError, match="trailing"):
        load_checkpoint(tmp_path / "e")
