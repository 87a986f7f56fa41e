"""Named RNG substreams so every stage draws from one global seed.

All randomness in the pipeline flows through ``substream``: a stream is
identified by the global seed plus a tuple of string/int keys (for example
``("capture", scene_id, view_id)``), so per-view work can run in any order
without changing what each view draws.
"""

from __future__ import annotations

import zlib

import numpy as np


def _key_to_int(key: str | int) -> int:
    if isinstance(key, int):
        return key & 0xFFFFFFFF
    return zlib.crc32(key.encode("utf-8"))


def substream(seed: int, *keys: str | int) -> np.random.Generator:
    """Derive an independent generator for (seed, *keys)."""
    entropy = [int(seed) & 0xFFFFFFFF] + [_key_to_int(k) for k in keys]
    return np.random.default_rng(np.random.SeedSequence(entropy))
