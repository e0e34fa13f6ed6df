"""Deterministic RNG derivation.

Every random draw in the pipeline is traceable to a single master seed.
Sub-streams are derived by hashing the master seed together with string
or integer tokens naming the consumer, so parallel or reordered
evaluation cannot change results.
"""

import hashlib

import numpy as np


def derive_seed(master: int, *tokens) -> int:
    """Derive a 64-bit child seed from a master seed and context tokens."""
    h = hashlib.sha256()
    h.update(str(int(master)).encode())
    for tok in tokens:
        h.update(b"\x1f")
        h.update(str(tok).encode())
    return int.from_bytes(h.digest()[:8], "big")


def derive_rng(master: int, *tokens) -> np.random.Generator:
    """A numpy Generator seeded from (master, tokens)."""
    return np.random.default_rng(derive_seed(master, *tokens))
