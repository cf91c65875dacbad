"""Named random substreams derived from a single seed."""

from __future__ import annotations

import zlib

import numpy as np


def substream_seed(seed: int, name: str) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, zlib.crc32(name.encode("utf-8"))])


def substream(seed: int, name: str) -> np.random.Generator:
    """Generator for one named consumer; independent of call order."""
    return np.random.default_rng(substream_seed(seed, name))


def derive_seed(seed: int, name: str) -> int:
    """Plain integer seed for APIs that take one."""
    return int(substream_seed(seed, name).generate_state(1, dtype=np.uint32)[0])
