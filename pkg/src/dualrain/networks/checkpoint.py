"""Checkpoint files: magic, header length, JSON header, float32 blob.

Layout (all integers little-endian)::

    bytes 0..7    b"DRCKPT01"
    bytes 8..15   uint64 N, length of the header in bytes
    bytes 16..    N bytes of UTF-8 JSON (keys sorted, no trailing newline)
    then          concatenated tensors as little-endian float32, C order

The header holds ``arch_id``, ``arch_config``, ``init_seed``, ``meta`` and
``tensors``: a list of ``{name, dtype, shape, offset, nbytes}`` where
``offset`` counts from the start of the blob.
"""
from __future__ import annotations

import json
import os
import struct
from pathlib import Path

import numpy as np
import torch

from ..errors import CheckpointError
from .models import ArchConfig, ParamSet

MAGIC = b"DRCKPT01"


def checkpoint_bytes(params: ParamSet, meta: dict | None = None) -> bytes:
    table, chunks, offset = [], [], 0
    for name, t in params.tensors.items():
        arr = t.detach().cpu().numpy().astype("<f4", copy=False)
        raw = np.ascontiguousarray(arr).tobytes()
        table.append({"name": name, "dtype": "float32", "shape": list(arr.shape),
                      "offset": offset, "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = {
        "arch_id": params.arch_id,
        "arch_config": params.cfg.to_dict(),
        "init_seed": params.init_seed,
        "meta": meta or {},
        "tensors": table,
    }
    hb = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return MAGIC + struct.pack("<Q", len(hb)) + hb + b"".join(chunks)


def save_checkpoint(path, params: ParamSet, meta: dict | None = None) -> Path:
    path = Path(path)
    tmp = path.with_name(path.name + ".partial")
    tmp.write_bytes(checkpoint_bytes(params, meta))
    os.replace(tmp, path)
    return path


def read_header(path) -> dict:
    with open(path, "rb") as fh:
        head = fh.read(16)
        if len(head) < 16 or head[:8] != MAGIC:
            raise CheckpointError(f"{path} is not a checkpoint file")
        (n,) = struct.unpack("<Q", head[8:])
        return json.loads(fh.read(n).decode("utf-8"))


def load_checkpoint(path, dtype=torch.float32) -> ParamSet:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path} is not a checkpoint file")
    (n,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16 : 16 + n].decode("utf-8"))
    blob = memoryview(data)[16 + n :]
    tensors = {}
    for rec in header["tensors"]:
        end = rec["offset"] + rec["nbytes"]
        if rec["dtype"] != "float32" or end > len(blob):
            raise CheckpointError(f"corrupt tensor record {rec['name']} in {path}")
        arr = np.frombuffer(blob[rec["offset"] : end], dtype="<f4").reshape(rec["shape"])
        tensors[rec["name"]] = torch.from_numpy(arr.copy()).to(dtype)
    cfg = ArchConfig.from_dict(header["arch_config"])
    return ParamSet(header["arch_id"], cfg, int(header["init_seed"]), tensors)
