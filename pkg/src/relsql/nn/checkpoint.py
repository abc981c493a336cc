"""Checkpoint blob: magic, format version, JSON header, raw little-endian tensors."""

from __future__ import annotations

import json
import os
import struct

import numpy as np

MAGIC = b"RELSQLCK"
VERSION = 1


class CheckpointError(Exception):
    pass


def save_checkpoint(path: str | os.PathLike, params: dict[str, np.ndarray], meta: dict) -> None:
    names = sorted(params)
    header = dict(meta)
    header["tensors"] = [
        {"name": n, "shape": list(params[n].shape), "dtype": params[n].dtype.newbyteorder("<").str} for n in names
    ]
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<IQ", VERSION, len(blob)))
        f.write(blob)
        for n in names:
            arr = params[n]
            f.write(np.ascontiguousarray(arr, dtype=arr.dtype.newbyteorder("<")).tobytes())


def load_checkpoint(path: str | os.PathLike) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as f:
        data = f.read()
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    off = len(MAGIC)
    version, hlen = struct.unpack_from("<IQ", data, off)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    off += struct.calcsize("<IQ")
    header = json.loads(data[off:off + hlen].decode("utf-8"))
    off += hlen
    params = {}
    for t in header.pop("tensors"):
        dt = np.dtype(t["dtype"])
        n = int(np.prod(t["shape"])) if t["shape"] else 1
        end = off + n * dt.itemsize
        if end > len(data):
            raise CheckpointError(f"{path}: truncated at tensor {t['name']!r}")
        params[t["name"]] = np.frombuffer(data[off:end], dtype=dt).reshape(t["shape"]).astype(dt.newbyteorder("="))
        off = end
    if off != len(data):
        raise CheckpointError(f"{path}: {len(data) - off} trailing bytes")
    return params, header
