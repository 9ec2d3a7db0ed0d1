"""Seeded, counter-based random streams.

Every stochastic component draws from its own Philox stream keyed by the
run seed plus a tuple of integers/strings, so results do not depend on call
order across components or on worker scheduling.
"""
from __future__ import annotations

import zlib

import numpy as np


def _key_word(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part) & 0xFFFFFFFF


def make_rng(seed: int, *stream) -> np.random.Generator:
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [_key_word(p) for p in stream]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))
