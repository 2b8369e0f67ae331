import hashlib

import numpy as np


def derive_seed(*keys) -> int:
    """Stable 63-bit seed from a tuple of ints/strings."""
    h = hashlib.blake2b(repr(tuple(keys)).encode("utf-8"), digest_size=8).digest()
    return int.from_bytes(h, "little") >> 1


def rng_for(*keys) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*keys))
