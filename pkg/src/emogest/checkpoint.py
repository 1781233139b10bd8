"""Binary parameter checkpoints: named tensor sections + embedded config.

Layout: an 8-byte versioned magic, a length-prefixed UTF-8 JSON config
blob, a tensor count, then per tensor a length-prefixed name, a dim count,
the dims, and raw little-endian float64 values.
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"EGCKPT01"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, tensors: dict, config: dict):
    """Write named arrays (or Tensors) plus a JSON-serializable config."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        blob = json.dumps(config, sort_keys=True).encode()
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(struct.pack("<I", len(tensors)))
        for name, t in tensors.items():
            arr = np.asarray(getattr(t, "data", t), dtype="<f8")
            name_b = name.encode()
            fh.write(struct.pack("<I", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_checkpoint(path):
    """Read back (tensors: dict[str, ndarray], config: dict)."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {data[:8]!r}, expected {MAGIC!r}")
    off = 8

    def unpack(fmt):
        nonlocal off
        size = struct.calcsize(fmt)
        if off + size > len(data):
            raise CheckpointError(f"{path}: truncated at byte {off}")
        vals = struct.unpack_from(fmt, data, off)
        off += size
        return vals

    (cfg_len,) = unpack("<I")
    config = json.loads(data[off : off + cfg_len].decode())
    off += cfg_len
    (count,) = unpack("<I")
    tensors = {}
    for _ in range(count):
        (name_len,) = unpack("<I")
        name = data[off : off + name_len].decode()
        off += name_len
        (ndim,) = unpack("<I")
        shape = unpack(f"<{ndim}I")
        n = int(np.prod(shape)) if shape else 1
        size = 8 * n
        if off + size > len(data):
            raise CheckpointError(f"{path}: truncated tensor {name!r}")
        arr = np.frombuffer(data, dtype="<f8", count=n, offset=off).reshape(shape).copy()
        off += size
        tensors[name] = arr
    if off != len(data):
        raise CheckpointError(f"{path}: {len(data) - off} trailing bytes")
    return tensors, config
