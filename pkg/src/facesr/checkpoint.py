"""Checkpoint archive: a zip holding ``config.json`` plus one ``.npy`` per array.

Each ``<name>.npy`` member is a standard NumPy header (shape, little-endian
dtype) followed by the raw array bytes. Member timestamps are pinned so that
identical contents give byte-identical files.
"""

from __future__ import annotations

import io
import json
import os
import zipfile
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

FORMAT_VERSION = 1
_EPOCH = (1980, 1, 1, 0, 0, 0)


class CheckpointError(IOError):
    pass


def _member(name: str) -> zipfile.ZipInfo:
    info = zipfile.ZipInfo(name, date_time=_EPOCH)
    info.compress_type = zipfile.ZIP_STORED
    info.external_attr = 0o644 << 16
    return info


def save_archive(path: str | Path, config: dict, arrays: dict[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    record = {"format_version": FORMAT_VERSION, **config}
    tmp = path.with_name(path.name + ".tmp")
    with zipfile.ZipFile(tmp, "w") as zf:
        zf.writestr(_member("config.json"), json.dumps(record, indent=2, sort_keys=True))
        for name in sorted(arrays):
            arr = np.asarray(arrays[name])
            arr = arr.astype(arr.dtype.newbyteorder("<"), copy=False)
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
            zf.writestr(_member(name + ".npy"), buf.getvalue())
    os.replace(tmp, path)
    return path


def load_archive(path: str | Path, prefix: str | None = None) -> tuple[dict, dict[str, np.ndarray]]:
    """Read an archive; with ``prefix`` only arrays under ``prefix/`` are decoded."""
    path = Path(path)
    try:
        with zipfile.ZipFile(path) as zf:
            config = json.loads(zf.read("config.json"))
            arrays = {}
            for name in zf.namelist():
                if not name.endswith(".npy"):
                    continue
                key = name[: -len(".npy")]
                if prefix is not None and not key.startswith(prefix + "/"):
                    continue
                arrays[key] = np.lib.format.read_array(io.BytesIO(zf.read(name)), allow_pickle=False)
    except (OSError, KeyError, ValueError, zipfile.BadZipFile) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if config.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {config.get('format_version')!r}")
    return config, arrays


def module_arrays(module: nn.Module, section: str) -> dict[str, np.ndarray]:
    return {f"{section}/{k}": v.detach().cpu().numpy() for k, v in module.state_dict().items()}


def load_module(module: nn.Module, arrays: dict[str, np.ndarray], section: str) -> None:
    prefix = section + "/"
    state = {k[len(prefix):]: torch.from_numpy(v.copy()) for k, v in arrays.items() if k.startswith(prefix)}
    try:
        module.load_state_dict(state)
    except RuntimeError as exc:
        raise CheckpointError(f"section {section!r} does not match the model: {exc}") from exc


def optimizer_arrays(opt: torch.optim.Optimizer, section: str) -> dict[str, np.ndarray]:
    out = {}
    for idx, st in opt.state_dict()["state"].items():
        for key, val in st.items():
            out[f"{section}/{idx}/{key}"] = torch.as_tensor(val).detach().cpu().numpy()
    return out


def load_optimizer(opt: torch.optim.Optimizer, arrays: dict[str, np.ndarray], section: str) -> None:
    prefix = section + "/"
    state: dict[int, dict] = {}
    for name, val in arrays.items():
        if not name.startswith(prefix):
            continue
        idx, key = name[len(prefix):].split("/", 1)
        state.setdefault(int(idx), {})[key] = torch.from_numpy(val.copy())
    sd = opt.state_dict()
    sd["state"] = state
    opt.load_state_dict(sd)
