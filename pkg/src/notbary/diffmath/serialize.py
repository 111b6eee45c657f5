"""Flat little-endian float64 serialization of named arrays.

A set of arrays is stored as an ordered manifest of ``{name, shape}``
entries plus one byte blob holding every array's values back to back in
manifest order, each as little-endian IEEE-754 doubles.
"""

from __future__ import annotations

from typing import Dict, List, Sequence, Tuple

import numpy as np

from ..errors import CorruptCheckpointError

LE_FLOAT64 = np.dtype("<f8")


def pack_arrays(named: Sequence[Tuple[str, np.ndarray]]) -> Tuple[List[Dict[str, object]], bytes]:
    """Return ``(entries, blob)`` for the given ``(name, array)`` pairs."""
    entries: List[Dict[str, object]] = []
    chunks: List[bytes] = []
    for name, array in named:
        a = np.ascontiguousarray(array, dtype=LE_FLOAT64)
        entries.append({"name": name, "shape": list(a.shape)})
        chunks.append(a.tobytes(order="C"))
    return entries, b"".join(chunks)


def unpack_arrays(entries: Sequence[Dict[str, object]], blob: bytes) -> Dict[str, np.ndarray]:
    """Inverse of `pack_arrays`.

    Raises:
        CorruptCheckpointError: If the blob length disagrees with the manifest.
    """
    sizes = [int(np.prod(e["shape"], dtype=np.int64)) for e in entries]
    expected = sum(sizes) * LE_FLOAT64.itemsize
    if len(blob) != expected:
        raise CorruptCheckpointError(
            "parameter blob length does not match manifest",
            {"expected_bytes": expected, "actual_bytes": len(blob)},
        )
    values = np.frombuffer(blob, dtype=LE_FLOAT64)
    out: Dict[str, np.ndarray] = {}
    offset = 0
    for entry, size in zip(entries, sizes):
        shape = tuple(int(s) for s in entry["shape"])  # type: ignore[union-attr]
        out[str(entry["name"])] = values[offset : offset + size].astype(np.float64).reshape(shape)
        offset += size
    return out
