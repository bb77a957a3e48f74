"""Seed derivation so every stochastic step is a pure function of the master seed."""

import hashlib
from typing import Union

import numpy as np

SeedPart = Union[int, str]


def derive_seed(master_seed: int, *parts: SeedPart) -> int:
    """
    Derive a 64-bit seed from the master seed and a path of labels.

    The result does not depend on worker count or call order, only on the
    arguments, e.g. ``derive_seed(seed, round_index, client_id, "phase1")``.

    Args:
        master_seed: Run-level seed
        *parts: Integers or strings identifying the consumer

    Returns:
        Non-negative 64-bit integer seed
    """
    digest = hashlib.blake2b(digest_size=8)
    digest.update(str(int(master_seed)).encode("utf-8"))
    for part in parts:
        digest.update(b"/")
        digest.update(str(part).encode("utf-8"))
    return int.from_bytes(digest.digest(), "little")


def make_rng(master_seed: int, *parts: SeedPart) -> np.random.Generator:
    """Build a numpy Generator seeded with ``derive_seed(master_seed, *parts)``."""
    return np.random.default_rng(derive_seed(master_seed, *parts))
