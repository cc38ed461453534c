import zipfile

import numpy as np
import pytest
import torch

from facesr.checkpoint import CheckpointError, load_archive, load_module, module_arrays, save_archive


def test_round_trip(tmp_path):
    arrays = {"b/x": np.arange(6, dtype=np.float32).reshape(2, 3), "a/y": np.array([1, 2], dtype=np.int64)}
    path = save_archive(tmp_path / "c.ckpt", {"hello": 1}, arrays)
    cfg, back = load_archive(path)
    assert cfg == {"format_version": 1, "hello": 1}
    assert set(back) == set(arrays)
    for k in arrays:
        assert np.array_equal(back[k], arrays[k]) and back[k].dtype == arrays[k].dtype
    names = zipfile.ZipFile(path).namelist()
    assert names == ["config.json", "a/y.npy", "b/x.npy"]


def test_prefix_filter(tmp_path):
    arrays = {"generator/w": np.zeros(2), "d_global/w": np.ones(2)}
    path = save_archive(tmp_path / "c.ckpt", {}, arrays)
    _, back = load_archive(path, prefix="generator")
    assert list(back) == ["generator/w"]


def test_byte_identical(tmp_path):
    arrays = {"w": np.linspace(0, 1, 10)}
    a = save_archive(tmp_path / "a.ckpt", {"k": [1, 2]}, arrays)
    b = save_archive(tmp_path / "b.ckpt", {"k": [1, 2]}, arrays)
    assert a.read_bytes() == b.read_bytes()


def test_big_endian_is_stored_little(tmp_path):
    path = save_archive(tmp_path / "c.ckpt", {}, {"w": np.arange(3, dtype=">f4")})
    _, back = load_archive(path)
    assert back["w"].dtype.str == "<f4"
    assert back["w"].tolist() == [0.0, 1.0, 2.0]


def test_corrupt_and_version(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a zip")
    with pytest.raises(CheckpointError):
        load_archive(bad)
    with pytest.raises(CheckpointError):
        load_archive(tmp_path / "absent.ckpt")
    old = tmp_path / "old.ckpt"
    with zipfile.ZipFile(old, "w") as zf:
        zf.writestr("config.json", '{"format_version": 0}')
    with pytest.raises(CheckpointError, match="version"):
        load_archive(old)


def test_module_round_trip_and_mismatch():
    src, dst = torch.nn.Linear(3, 2), torch.nn.Linear(3, 2)
    arrays = module_arrays(src, "net")
    load_module(dst, arrays, "net")
    assert torch.equal(src.weight, dst.weight)
    with pytest.raises(CheckpointError):
        load_module(torch.nn.Linear(4, 2), arrays, "net")
