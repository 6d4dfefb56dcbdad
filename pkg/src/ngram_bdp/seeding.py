"""Deterministic seed fan-out.

Child seeds are derived by hashing ``(root, label, index)`` so that every
consumer gets an independent stream without touching global RNG state.
"""

import hashlib

import numpy as np


def derive_seed(root, label="", index=0):
    """Return a 63-bit child seed for ``(root, label, index)``."""
    key = f"{int(root)}\x1f{label}\x1f{int(index)}".encode("utf-8")
    digest = hashlib.sha256(key).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def make_rng(seed, label=None, index=0):
    """A numpy Generator; when ``label`` is given the seed is fanned out first."""
    if label is not None:
        seed = derive_seed(seed, label, index)
    return np.random.Generator(np.random.PCG64(seed))
