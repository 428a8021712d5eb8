"""Deterministic single-file parameter archive.

Layout: a magic line, an 8-byte little-endian manifest length, the
manifest JSON (sorted keys), then the raw float64 row-major payload of
every parameter in manifest order.  No timestamps anywhere, so identical
runs produce byte-identical files.
"""

from __future__ import annotations

import json
import struct
from typing import Dict, Tuple

import numpy as np

MAGIC = b"CODESUMM-CKPT-1\n"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params: Dict[str, np.ndarray], meta: dict) -> None:
    order = sorted(params)
    manifest = {
        "meta": meta,
        "params": [{"path": name, "shape": list(params[name].shape)}
                   for name in order],
    }
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for name in order:
            arr = np.ascontiguousarray(params[name], dtype=np.float64)
            fh.write(arr.tobytes())


def load_checkpoint(path) -> Tuple[Dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        (blob_len,) = struct.unpack("<Q", fh.read(8))
        manifest = json.loads(fh.read(blob_len).decode())
        params = {}
        for entry in manifest["params"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            data = fh.read(count * 8)
            if len(data) != count * 8:
                raise CheckpointError(f"{path}: truncated payload at {entry['path']}")
            params[entry["path"]] = np.frombuffer(data, dtype=np.float64).reshape(shape).copy()
        if fh.read(1):
            raise CheckpointError(f"{path}: trailing bytes after payload")
    return params, manifest["meta"]
