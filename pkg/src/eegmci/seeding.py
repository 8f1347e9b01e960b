"""Deterministic named random substreams.

All randomness in the pipeline flows from one root seed. Independent
consumers (splitting, weight init, batch shuffling, balancing, attribution)
derive their own substream by name so that adding or reordering one consumer
never perturbs another.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _tag_to_int(tag) -> int:
    if isinstance(tag, (int, np.integer)):
        return int(tag) & 0xFFFFFFFF
    digest = hashlib.sha256(str(tag).encode("utf-8")).digest()
    return int.from_bytes(digest[:4], "little")


def substream(root_seed: int, *tags) -> np.random.Generator:
    """Return a Generator for the substream named by ``tags``.

    Equal (root_seed, tags) always yields the same stream, on any platform.
    """
    entropy = [int(root_seed) & 0xFFFFFFFFFFFFFFFF] + [_tag_to_int(t) for t in tags]
    return np.random.default_rng(np.random.SeedSequence(entropy))
