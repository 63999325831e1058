"""Model checkpoint serialization.

Layout (all integers little-endian u32, all floats little-endian f64):

    magic "SGNM" | format version | arch tag (len + utf8)
    | metadata block (len + canonical JSON utf8)
    | tensor count | per tensor: name len + name + ndim + dims + data

Metadata JSON is dumped with sorted keys and compact separators, so a
load -> save cycle reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Dict, Tuple

import numpy as np

MAGIC = b"SGNM"
FORMAT_VERSION = 1


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return struct.pack("<I", len(raw)) + raw


def save_checkpoint(path, arch: str, meta: dict, params: Dict[str, np.ndarray]) -> None:
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", FORMAT_VERSION)
    blob += _pack_str(arch)
    blob += _pack_str(json.dumps(meta, sort_keys=True, separators=(",", ":")))
    blob += struct.pack("<I", len(params))
    for name, arr in params.items():
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        blob += _pack_str(name)
        blob += struct.pack("<I", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += arr.astype("<f8").tobytes()
    Path(path).write_bytes(bytes(blob))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise ValueError("truncated checkpoint file")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        return self.take(self.u32()).decode("utf-8")


def load_checkpoint(path) -> Tuple[str, dict, Dict[str, np.ndarray]]:
    r = _Reader(Path(path).read_bytes())
    if r.take(4) != MAGIC:
        raise ValueError(f"{path}: not a model checkpoint (bad magic)")
    version = r.u32()
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint format version {version}")
    arch = r.string()
    meta = json.loads(r.string())
    count = r.u32()
    params: Dict[str, np.ndarray] = {}
    for _ in range(count):
        name = r.string()
        ndim = r.u32()
        shape = struct.unpack(f"<{ndim}I", r.take(4 * ndim))
        n = int(np.prod(shape)) if ndim else 1
        data = np.frombuffer(r.take(8 * n), dtype="<f8").reshape(shape)
        params[name] = np.array(data, dtype=np.float64)
    if r.pos != len(r.buf):
        raise ValueError(f"{path}: trailing bytes after checkpoint payload")
    return arch, meta, params
