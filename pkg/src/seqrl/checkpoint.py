"""Self-describing binary container for named float64 arrays.

Layout: magic ``SQRL``, u32 format version, u64 header length, UTF-8 JSON
header, then the raw array payloads concatenated in header order. Payloads
are little-endian float64, C order. The header carries a ``meta`` dict for
arbitrary JSON metadata (variant tag, step counters, rng state, ...).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import CorruptStreamError

MAGIC = b"SQRL"
FORMAT_VERSION = 1


def save_arrays(path, arrays: dict[str, np.ndarray], meta: dict | None = None):
    entries = []
    payloads = []
    for name, arr in arrays.items():
        arr = np.ascontiguousarray(np.asarray(arr, dtype=np.float64))
        entries.append({"name": name, "shape": list(arr.shape)})
        payloads.append(arr.astype("<f8").tobytes())
    header = json.dumps(
        {"version": FORMAT_VERSION, "meta": meta or {}, "entries": entries},
        sort_keys=True,
    ).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<Q", len(header)))
        fh.write(header)
        for payload in payloads:
            fh.write(payload)


def load_arrays(path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise CorruptStreamError(f"{path}: bad magic {magic!r}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != FORMAT_VERSION:
            raise CorruptStreamError(f"{path}: unsupported format version {version}")
        (header_len,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(header_len).decode("utf-8"))
        arrays = {}
        for entry in header["entries"]:
            shape = tuple(entry["shape"])
            count = int(np.prod(shape)) if shape else 1
            raw = fh.read(count * 8)
            if len(raw) != count * 8:
                raise CorruptStreamError(f"{path}: truncated payload for {entry['name']}")
            arrays[entry["name"]] = np.frombuffer(raw, dtype="<f8").reshape(shape).copy()
    return arrays, header["meta"]
