"""Self-describing checkpoint files.

Layout (all little-endian)::

    b"WFCK" | u16 format version | u32 header length | JSON header | raw arrays

The JSON header holds the model config, the format version and, per
parameter, its name, shape, dtype and byte offset into the payload.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Mapping

import numpy as np

MAGIC = b"WFCK"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, params: Mapping[str, np.ndarray], config: Mapping | None = None,
                    extra: Mapping | None = None) -> Path:
    path = Path(path)
    entries, chunks, offset = [], [], 0
    for name, arr in params.items():
        arr = np.asarray(getattr(arr, "data", arr))
        dtype = arr.dtype.newbyteorder("<")
        raw = np.ascontiguousarray(arr, dtype=dtype).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "dtype": dtype.str, "offset": offset,
                        "nbytes": len(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = json.dumps({"format_version": FORMAT_VERSION, "config": dict(config or {}),
                         "extra": dict(extra or {}), "tensors": entries}).encode()
    with open(path, "wb") as fh:
        fh.write(MAGIC + struct.pack("<HI", FORMAT_VERSION, len(header)) + header)
        for c in chunks:
            fh.write(c)
    return path


def load_checkpoint(path) -> tuple[dict, dict, dict]:
    """Return ``(params, config, extra)`` from a checkpoint written by :func:`save_checkpoint`."""
    blob = Path(path).read_bytes()
    if blob[:4] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    version, hlen = struct.unpack_from("<HI", blob, 4)
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    start = 10 + hlen
    try:
        header = json.loads(blob[10:start])
    except (ValueError, UnicodeDecodeError) as exc:
        raise CheckpointError("corrupt checkpoint header") from exc
    params = {}
    for e in header["tensors"]:
        lo = start + e["offset"]
        if lo + e["nbytes"] > len(blob):
            raise CheckpointError(f"checkpoint truncated inside {e['name']!r}")
        arr = np.frombuffer(blob, dtype=np.dtype(e["dtype"]), count=int(np.prod(e["shape"], dtype=int)),
                            offset=lo)
        params[e["name"]] = arr.reshape(e["shape"]).astype(np.dtype(e["dtype"]).newbyteorder("="))
    return params, header["config"], header.get("extra", {})
