"""
Seeded random streams.

Every random quantity in a run is drawn from a stream identified by
(root seed, purpose tag, optional index), so datasets, initial iterates and
chain noise never share state and adding trials does not perturb earlier ones.
"""

import hashlib
from typing import Optional

import numpy as np


def tag_code(tag: str) -> int:
    """Stable 32-bit integer for a purpose tag such as ``"noise/dadmms"``."""
    digest = hashlib.sha256(tag.encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def seed_sequence(root_seed: int, tag: str, index: Optional[int] = None) -> np.random.SeedSequence:
    """
    Build the SeedSequence of one stream.

    Args:
        root_seed (int): Non-negative root seed of the run.
        tag (str): Purpose tag, e.g. ``"dataset"``, ``"init"``, ``"noise/dsgld"``.
        index (int): Optional trial index.

    Returns:
        numpy.random.SeedSequence: Independent child sequence.
    """
    if root_seed < 0:
        raise ValueError("Seeds must be non-negative.")
    key = (tag_code(tag),) if index is None else (tag_code(tag), int(index))
    return np.random.SeedSequence(entropy=int(root_seed), spawn_key=key)


def stream(root_seed: int, tag: str, index: Optional[int] = None) -> np.random.Generator:
    """Generator for the (root_seed, tag, index) stream."""
    return np.random.default_rng(seed_sequence(root_seed, tag, index))


def derive_seed(root_seed: int, tag: str, index: Optional[int] = None) -> int:
    """
    Integer seed derived from a stream, used to hand a trial its own root.

    Example:
        >>> derive_seed(0, "trial", 3) == derive_seed(0, "trial", 3)
        True
    """
    state = seed_sequence(root_seed, tag, index).generate_state(2, dtype=np.uint32)
    return int(state[0]) << 32 | int(state[1])
