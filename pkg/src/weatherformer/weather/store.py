"""Binary tile store ("WFDS").

File layout, little-endian::

    b"WFDS" | u16 version | u32 tile count
    per tile:
        header  <4d I H H H B I H I>  bounds, coord count, start year, end year,
                                       granularity, split, rows, features, tile id
        coords  float64 (coords, 2)   latitude, longitude
        values  float32 (coords, rows, features), row-major
        crc32   u32 over header + coords + values
"""
from __future__ import annotations

import struct
import zlib
from pathlib import Path
from typing import Sequence

import numpy as np

from .series import GridTile

MAGIC = b"WFDS"
VERSION = 1
_FILE_HEADER = struct.Struct("<4sHI")
_TILE_HEADER = struct.Struct("<4dIHHHBIHI")
_SPLITS = ("train", "val")


class StoreError(ValueError):
    """Malformed, truncated or incompatible store file."""


class ChecksumError(StoreError):
    pass


def encode_tiles(tiles: Sequence[GridTile]) -> bytes:
    parts = [_FILE_HEADER.pack(MAGIC, VERSION, len(tiles))]
    for t in tiles:
        k, rows, feats = t.values.shape
        head = _TILE_HEADER.pack(*t.bounds, k, t.start_year, t.end_year, t.granularity_days,
                                 _SPLITS.index(t.split), rows, feats, t.tile_id)
        body = head + t.coords.astype("<f8").tobytes() + np.ascontiguousarray(t.values, dtype="<f4").tobytes()
        parts.append(body + struct.pack("<I", zlib.crc32(body)))
    return b"".join(parts)


def decode_tiles(blob: bytes) -> list:
    if len(blob) < _FILE_HEADER.size:
        raise StoreError("store truncated before file header")
    magic, version, count = _FILE_HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise StoreError("not a WFDS store (bad magic)")
    if version != VERSION:
        raise StoreError(f"unsupported store version {version} (expected {VERSION})")
    pos = _FILE_HEADER.size
    tiles = []
    for n in range(count):
        if pos + _TILE_HEADER.size > len(blob):
            raise StoreError(f"store truncated in header of tile {n}")
        (b0, b1, b2, b3, k, y0, y1, gran, split, rows, feats, tile_id) = _TILE_HEADER.unpack_from(blob, pos)
        size = _TILE_HEADER.size + 16 * k + 4 * k * rows * feats
        if pos + size + 4 > len(blob):
            raise StoreError(f"store truncated in tile {n}")
        body = blob[pos:pos + size]
        (crc,) = struct.unpack_from("<I", blob, pos + size)
        if zlib.crc32(body) != crc:
            raise ChecksumError(f"checksum mismatch in tile {n}")
        off = _TILE_HEADER.size
        coords = np.frombuffer(body, dtype="<f8", count=2 * k, offset=off).reshape(k, 2)
        values = np.frombuffer(body, dtype="<f4", count=k * rows * feats, offset=off + 16 * k)
        if split >= len(_SPLITS):
            raise StoreError(f"bad split tag {split} in tile {n}")
        tiles.append(GridTile((b0, b1, b2, b3), coords.astype(np.float64), y0, y1, gran,
                              values.reshape(k, rows, feats).astype(np.float32), _SPLITS[split], tile_id))
        pos += size + 4
    if pos != len(blob):
        raise StoreError("trailing bytes after last tile")
    return tiles


def write_store(tiles: Sequence[GridTile], path) -> Path:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode_tiles(tiles))
    tmp.replace(path)
    return path


def read_store(path) -> list:
    return decode_tiles(Path(path).read_bytes())
