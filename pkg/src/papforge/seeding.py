"""Labeled seed derivation.

Every stochastic component draws from ``derive_seed(root, "component", index, ...)``
so adding a component never shifts another component's stream.
"""

from __future__ import annotations

import hashlib

import numpy as np


def derive_seed(root: int, *labels) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(repr((int(root),) + tuple(labels)).encode())
    return int.from_bytes(h.digest(), "little") >> 1


def rng_for(root: int, *labels) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *labels))
