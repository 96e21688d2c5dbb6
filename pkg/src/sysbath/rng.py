"""Named random streams derived from a single integer seed."""

from __future__ import annotations

import hashlib

import numpy as np


def stream_key(name: str) -> list[int]:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    return [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]


def named_rng(seed: int, name: str) -> np.random.Generator:
    """Independent generator for ``name``; the same (seed, name) always gives the same stream."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), *stream_key(name)])
    return np.random.default_rng(ss)


def haar_states(d: int, n: int, rng: np.random.Generator) -> list[np.ndarray]:
    """``n`` Haar-random pure states as density matrices."""
    out = []
    for _ in range(n):
        v = rng.normal(size=d) + 1j * rng.normal(size=d)
        v /= np.linalg.norm(v)
        out.append(np.outer(v, v.conj()))
    return out
