"""Versioned parameter checkpoints.

Layout: a UTF-8 text header, one record per line, terminated by ``end``,
followed by the raw little-endian values of every tensor in header order::

    TASJOINT-CHECKPOINT 1
    precision float32
    meta {"kind": "separator", ...}
    tensors 2
    encoder.weight float32 64,1,16
    decoder.weight float32 64,1,16
    end
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MAGIC = "TASJOINT-CHECKPOINT"
VERSION = 1
_LE = {"float32": "<f4", "float64": "<f8", "int64": "<i8"}


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, tensors, meta=None, precision=None):
    """Write ``tensors`` (name -> array or Tensor) in insertion order."""
    arrays = {}
    for name, value in tensors.items():
        arr = np.asarray(getattr(value, "data", value))
        if arr.dtype.name not in _LE:
            raise CheckpointError(f"{name}: unsupported dtype {arr.dtype}")
        if any(c.isspace() for c in name):
            raise CheckpointError(f"tensor name {name!r} contains whitespace")
        arrays[name] = arr
    if precision is None:
        floats = {a.dtype.name for a in arrays.values() if a.dtype.kind == "f"}
        precision = floats.pop() if len(floats) == 1 else "mixed"
    lines = [f"{MAGIC} {VERSION}", f"precision {precision}",
             "meta " + json.dumps(meta or {}, sort_keys=True), f"tensors {len(arrays)}"]
    for name, arr in arrays.items():
        lines.append(f"{name} {arr.dtype.name} {','.join(map(str, arr.shape))}")
    lines.append("end")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("utf-8"))
        for arr in arrays.values():
            fh.write(np.ascontiguousarray(arr, dtype=_LE[arr.dtype.name]).tobytes())
    return path


def load_checkpoint(path):
    """Return ``(tensors, meta, precision)``; arrays come back in native byte order."""
    blob = Path(path).read_bytes()
    pos = 0

    def line():
        nonlocal pos
        end = blob.find(b"\n", pos)
        if end < 0:
            raise CheckpointError(f"{path}: truncated header")
        text = blob[pos:end].decode("utf-8")
        pos = end + 1
        return text

    head = line().split()
    if len(head) != 2 or head[0] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint")
    if int(head[1]) != VERSION:
        raise CheckpointError(f"{path}: unsupported version {head[1]}")
    precision = line().split(maxsplit=1)[1]
    meta_line = line()
    if not meta_line.startswith("meta "):
        raise CheckpointError(f"{path}: missing meta record")
    meta = json.loads(meta_line[5:])
    count = int(line().split()[1])
    specs = []
    for _ in range(count):
        name, dtype, shape = (line().split() + [""])[:3]
        dims = tuple(int(d) for d in shape.split(",") if d)
        specs.append((name, dtype, dims))
    if line() != "end":
        raise CheckpointError(f"{path}: header not terminated")
    tensors = {}
    for name, dtype, dims in specs:
        le = np.dtype(_LE[dtype])
        n = int(np.prod(dims, dtype=np.int64)) * le.itemsize
        if pos + n > len(blob):
            raise CheckpointError(f"{path}: truncated data for {name}")
        tensors[name] = np.frombuffer(blob, dtype=le, count=n // le.itemsize,
                                      offset=pos).astype(dtype).reshape(dims)
        pos += n
    if pos != len(blob):
        raise CheckpointError(f"{path}: {len(blob) - pos} trailing bytes")
    return tensors, meta, precision
