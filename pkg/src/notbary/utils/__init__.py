"""Utility helpers for file output and random streams.

This package includes atomic file writes, the versioned CSV format used
for history and sample dumps, and the Philox stream factory shared by
samplers and network initialization.
"""

from .io import atomic_write_bytes, atomic_write_json, atomic_write_text, read_csv, write_csv
from .rng import make_rng, rng_state_from_json, rng_state_to_json, stream_id

__all__ = [
    "atomic_write_bytes",
    "atomic_write_json",
    "atomic_write_text",
    "read_csv",
    "write_csv",
    "make_rng",
    "rng_state_from_json",
    "rng_state_to_json",
    "stream_id",
]
