"""Flat binary checkpoint container for named parameter tensors.

Layout: magic `RPNF`, u32 LE format version, then one record per parameter:
u32 LE name length, UTF-8 name, u32 LE rank, rank u64 LE dims, then the
values as little-endian IEEE-754 float64. Records run to end of file.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"RPNF"
VERSION = 1


def save_checkpoint(params: dict[str, np.ndarray]) -> bytes:
    """Serialize a name -> array mapping; insertion order is preserved."""
    chunks = [MAGIC, struct.pack("<I", VERSION)]
    for name, arr in params.items():
        arr = np.asarray(arr, dtype=np.float64)  # tobytes() copies in C order
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", arr.ndim))
        for d in arr.shape:
            chunks.append(struct.pack("<Q", d))
        chunks.append(arr.astype("<f8").tobytes())
    return b"".join(chunks)


def load_checkpoint(data: bytes) -> dict[str, np.ndarray]:
    """Parse checkpoint bytes back into a name -> float64 array mapping."""
    if data[:4] != MAGIC:
        raise ValueError(f"bad checkpoint magic {data[:4]!r} at byte 0, expected {MAGIC!r}")
    if len(data) < 8:
        raise ValueError(f"truncated checkpoint header at byte {len(data)}")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != VERSION:
        raise ValueError(f"unknown checkpoint version {version}, this build reads {VERSION}")

    params: dict[str, np.ndarray] = {}
    off = 8
    total = len(data)

    def need(nbytes: int, what: str):
        if off + nbytes > total:
            raise ValueError(f"truncated checkpoint: expected {what} at byte {off}")

    while off < total:
        need(4, "name length")
        (name_len,) = struct.unpack_from("<I", data, off)
        off += 4
        need(name_len, "parameter name")
        name = data[off : off + name_len].decode("utf-8")
        off += name_len
        need(4, "rank")
        (rank,) = struct.unpack_from("<I", data, off)
        off += 4
        need(8 * rank, "dimensions")
        dims = struct.unpack_from(f"<{rank}Q", data, off) if rank else ()
        off += 8 * rank
        count = 1
        for d in dims:
            count *= d
        need(8 * count, f"values of {name!r}")
        values = np.frombuffer(data, dtype="<f8", count=count, offset=off).copy()
        off += 8 * count
        params[name] = values.reshape(dims).astype(np.float64)
    return params


def write_checkpoint(path: str | Path, params: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(save_checkpoint(params))


def read_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    return load_checkpoint(Path(path).read_bytes())
