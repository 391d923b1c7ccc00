"""Single-file checkpoints: a length-prefixed JSON header, then raw arrays.

Layout::

    b"SSPGCKPT"  | uint64 LE header length | JSON header (UTF-8) | float64 LE arrays

The header lists parameter names and shapes in the order their data follows.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .autodiff import ParamStore

MAGIC = b"SSPGCKPT"
FORMAT_VERSION = 1


def save_checkpoint(path, params: ParamStore, config: dict | None = None, extra: dict | None = None) -> None:
    names = list(params)
    header = {
        "format_version": FORMAT_VERSION,
        "params": [{"name": n, "shape": list(params[n].shape)} for n in names],
        "config": config or {},
        "extra": extra or {},
    }
    blob = json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for n in names:
            fh.write(np.ascontiguousarray(params[n], dtype="<f8").tobytes())


def load_checkpoint(path) -> tuple[ParamStore, dict, dict]:
    """Return ``(params, config, extra)``."""
    raw = Path(path).read_bytes()
    if raw[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack("<Q", raw[8:16])
    header = json.loads(raw[16:16 + hlen].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {header.get('format_version')}")
    params = ParamStore()
    offset = 16 + hlen
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        end = offset + 8 * count
        if end > len(raw):
            raise ValueError(f"{path}: truncated data for {entry['name']}")
        params.add(entry["name"], np.frombuffer(raw[offset:end], dtype="<f8").reshape(shape))
        offset = end
    if offset != len(raw):
        raise ValueError(f"{path}: {len(raw) - offset} trailing bytes")
    return params, header["config"], header["extra"]
