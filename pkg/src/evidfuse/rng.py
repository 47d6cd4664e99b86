"""Deterministic random-stream management.

Every random decision in a run flows from one root seed through named
substreams, so individual components (split, init, dropout, shuffle)
reproduce independently of each other.
"""

import zlib

import numpy as np


def substream(root_seed: int, name: str) -> np.random.Generator:
    """Generator for the named substream of ``root_seed``.

    The stream identity is (root_seed, crc32(name)), so adding a new
    stream never perturbs existing ones.
    """
    tag = zlib.crc32(name.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([root_seed, tag]))
