"""Deterministic seed derivation.

Every random draw in the package comes from a numpy ``Generator`` whose seed
is derived from a master seed plus a key path (item id, cell indices, ...).
String keys are hashed with blake2b so derivation does not depend on Python's
per-process hash salt.
"""
from __future__ import annotations

import hashlib

import numpy as np


def _key_word(key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key) & 0xFFFFFFFFFFFFFFFF
    digest = hashlib.blake2b(str(key).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def derive_seed(master: int, *keys) -> int:
    """Stable 63-bit seed for ``(master, *keys)``."""
    ss = np.random.SeedSequence([_key_word(master), *(_key_word(k) for k in keys)])
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def stream(master: int, *keys) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *keys))
