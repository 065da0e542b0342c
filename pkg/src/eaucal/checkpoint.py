"""Deterministic checkpoint container for named float64 arrays.

Zip-based formats stamp timestamps into the bytes, which breaks the
byte-identical-rerun contract, so checkpoints use a tiny explicit layout:

    line 1: magic "eaucal-checkpoint v1"
    line 2: JSON metadata (sorted keys)
    line 3: JSON manifest [[name, shape], ...] in save order
    then the raw little-endian float64 array bytes, concatenated in
    manifest order.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MAGIC = b"eaucal-checkpoint v1\n"


def save_checkpoint(path, arrays, meta=None):
    """Write named arrays plus a JSON-serializable metadata dict."""
    path = Path(path)
    manifest = [[name, list(np.asarray(a).shape)] for name, a in arrays.items()]
    with path.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(meta or {}, sort_keys=True).encode() + b"\n")
        fh.write(json.dumps(manifest).encode() + b"\n")
        for name, _ in manifest:
            fh.write(np.asarray(arrays[name], dtype="<f8", order="C").tobytes())


def load_checkpoint(path):
    """Inverse of save_checkpoint; returns (arrays dict, metadata dict)."""
    path = Path(path)
    with path.open("rb") as fh:
        if fh.readline() != MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic)")
        meta = json.loads(fh.readline().decode())
        manifest = json.loads(fh.readline().decode())
        arrays = {}
        for name, shape in manifest:
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise ValueError(f"{path}: truncated data for array {name!r}")
            arrays[name] = np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape)
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after manifest arrays")
    return arrays, meta
