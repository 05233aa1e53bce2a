"""Deterministic named-tensor checkpoint files.

Layout (version 1, little-endian, stable across releases):

    bytes 0..3    magic ``NTCK``
    bytes 4..7    uint32 header length ``H``
    bytes 8..8+H  UTF-8 JSON header
    rest          raw C-order tensor buffers, in header order

The JSON header is ``{"format_version": 1, "meta": {...}, "tensors":
[{"name", "dtype", "shape", "offset", "nbytes"}, ...]}`` with tensors
sorted by name.  No timestamps or platform fields are embedded, so
identical tensors always serialize to identical bytes.
"""

from __future__ import annotations

import json

import numpy as np

MAGIC = b"NTCK"
FORMAT_VERSION = 1


class CheckpointError(Exception):
    pass


def save_checkpoint(path, tensors: dict[str, np.ndarray], meta: dict | None = None):
    entries = []
    buffers = []
    offset = 0
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        buf = arr.tobytes()
        entries.append({
            "name": name,
            "dtype": arr.dtype.name,
            "shape": list(arr.shape),
            "offset": offset,
            "nbytes": len(buf),
        })
        buffers.append(buf)
        offset += len(buf)
    header = json.dumps(
        {"format_version": FORMAT_VERSION, "meta": meta or {}, "tensors": entries},
        sort_keys=True, separators=(",", ":")).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(np.uint32(len(header)).tobytes())
        fh.write(header)
        for buf in buffers:
            fh.write(buf)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        if fh.read(4) != MAGIC:
            raise CheckpointError(f"{path}: not a checkpoint file")
        header_len = int(np.frombuffer(fh.read(4), dtype=np.uint32)[0])
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("format_version") != FORMAT_VERSION:
            raise CheckpointError(
                f"{path}: unsupported format version {header.get('format_version')!r}")
        payload = fh.read()
    tensors = {}
    for entry in header["tensors"]:
        raw = payload[entry["offset"]:entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(raw, dtype=np.dtype(entry["dtype"])).reshape(entry["shape"])
        tensors[entry["name"]] = arr.copy()
    return tensors, header.get("meta", {})
