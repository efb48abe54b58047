import hashlib

import numpy as np


def derive_seed(master: int, *purpose) -> int:
    """Stable 63-bit sub-seed for ``(master, purpose...)``."""
    text = "/".join([str(int(master))] + [str(p) for p in purpose])
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little") >> 1


def rng_for(master: int, *purpose) -> np.random.Generator:
    return np.random.default_rng(derive_seed(master, *purpose))
