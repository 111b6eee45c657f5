"""Named Philox random streams.

Each consumer of randomness (a reference sampler, the auxiliary noise,
network initialization, evaluation) owns its own stream. A stream is a
numpy ``Generator`` over the counter-based Philox bit generator seeded
from ``SeedSequence(seed, spawn_key=(crc32(name),))``, which makes every
stream reproducible across platforms and independent of the others.
"""

from __future__ import annotations

import zlib
from typing import Any, Dict

import numpy as np


def stream_id(name: str) -> int:
    """Stable integer id of a stream name."""
    return zlib.crc32(name.encode("utf-8"))


def make_rng(seed: int, stream: str) -> np.random.Generator:
    """Create the generator for ``stream`` under the run seed ``seed``."""
    seq = np.random.SeedSequence(entropy=int(seed), spawn_key=(stream_id(stream),))
    return np.random.Generator(np.random.Philox(seq))


def _to_json(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return {"__ndarray__": [int(v) for v in value.ravel()], "dtype": str(value.dtype)}
    if isinstance(value, dict):
        return {k: _to_json(v) for k, v in value.items()}
    if isinstance(value, np.integer):
        return int(value)
    return value


def _from_json(value: Any) -> Any:
    if isinstance(value, dict):
        if "__ndarray__" in value:
            return np.array(value["__ndarray__"], dtype=value["dtype"])
        return {k: _from_json(v) for k, v in value.items()}
    return value


def rng_state_to_json(rng: np.random.Generator) -> Dict[str, Any]:
    """Snapshot a generator's bit-generator state as JSON-safe data."""
    return _to_json(rng.bit_generator.state)


def rng_state_from_json(rng: np.random.Generator, state: Dict[str, Any]) -> None:
    """Restore a snapshot taken with `rng_state_to_json` into ``rng``."""
    rng.bit_generator.state = _from_json(state)
