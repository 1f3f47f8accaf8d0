"""Deterministic seed derivation.

Every random stage draws from a sub-seed derived from the single root
seed plus a stable name path (stage, stratum, round, ...), so stages and
rounds can be rerun or parallelized without changing results.
"""

import hashlib

import numpy as np


def derive_seed(root_seed: int, *parts) -> int:
    """Derive a 64-bit sub-seed from a root seed and a name path."""
    text = "|".join([str(int(root_seed))] + [str(p) for p in parts])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def rng_for(root_seed: int, *parts) -> np.random.Generator:
    """Generator seeded by `derive_seed(root_seed, *parts)`."""
    return np.random.default_rng(derive_seed(root_seed, *parts))
