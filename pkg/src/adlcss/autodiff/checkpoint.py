"""ADLB checkpoint container.

Layout (little endian)::

    b"ADLB"  u32 version  u32 count
    count x { u32 name_len, name (UTF-8), u8 dtype, u32 rank, rank x u64 extent, payload }

dtype tags: 0 = float64, 1 = float32, 2 = uint8 (raw bytes, used for JSON
metadata entries under ``meta.``).  float32 entries widen to float64 on load.
"""

from __future__ import annotations

import hashlib
import io
import json
import struct
from pathlib import Path
from typing import Dict, Union

import numpy as np

MAGIC = b"ADLB"
VERSION = 1

_TAGS = {0: np.dtype("<f8"), 1: np.dtype("<f4"), 2: np.dtype("u1")}
_CODES = {np.dtype("<f8"): 0, np.dtype("<f4"): 1, np.dtype("u1"): 2}


class CheckpointError(ValueError):
    pass


def encode(entries: Dict[str, np.ndarray]) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<II", VERSION, len(entries)))
    for name in sorted(entries):
        arr = np.asarray(entries[name])
        dt = arr.dtype.newbyteorder("<") if arr.dtype.kind == "f" else arr.dtype
        if dt not in _CODES:
            raise CheckpointError(f"unsupported dtype {arr.dtype} for entry {name!r}")
        raw = name.encode("utf-8")
        buf.write(struct.pack("<I", len(raw)))
        buf.write(raw)
        buf.write(struct.pack("<BI", _CODES[dt], arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype=dt).tobytes())
    return buf.getvalue()


def decode(blob: bytes, widen: bool = True) -> Dict[str, np.ndarray]:
    view = memoryview(blob)
    if bytes(view[:4]) != MAGIC:
        raise CheckpointError("not an ADLB checkpoint (bad magic)")
    try:
        version, count = struct.unpack_from("<II", view, 4)
        if version != VERSION:
            raise CheckpointError(f"unsupported ADLB version {version}")
        off = 12
        out = {}
        for _ in range(count):
            (nlen,) = struct.unpack_from("<I", view, off)
            off += 4
            name = bytes(view[off:off + nlen]).decode("utf-8")
            off += nlen
            tag, rank = struct.unpack_from("<BI", view, off)
            off += 5
            shape = struct.unpack_from(f"<{rank}Q", view, off)
            off += 8 * rank
            if tag not in _TAGS:
                raise CheckpointError(f"unknown dtype tag {tag} for entry {name!r}")
            dt = _TAGS[tag]
            n = int(np.prod(shape)) if rank else 1
            nbytes = n * dt.itemsize
            if off + nbytes > len(view):
                raise CheckpointError(f"truncated payload for entry {name!r}")
            arr = np.frombuffer(view[off:off + nbytes], dtype=dt).reshape(shape).copy()
            off += nbytes
            if widen and tag == 1:
                arr = arr.astype(np.float64)
            out[name] = arr
    except struct.error as exc:
        raise CheckpointError(f"truncated checkpoint: {exc}") from None
    return out


def save(path: Union[str, Path], entries: Dict[str, np.ndarray], meta: dict = None) -> None:
    entries = dict(entries)
    if meta is not None:
        entries["meta.json"] = np.frombuffer(
            json.dumps(meta, sort_keys=True).encode("utf-8"), dtype=np.uint8)
    Path(path).write_bytes(encode(entries))


def load(path: Union[str, Path], widen: bool = True):
    """Return ``(tensors, meta)``; ``meta`` is ``{}`` when absent."""
    entries = decode(Path(path).read_bytes(), widen=widen)
    raw = entries.pop("meta.json", None)
    meta = json.loads(bytes(raw).decode("utf-8")) if raw is not None else {}
    return entries, meta


def file_hash(path: Union[str, Path]) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
