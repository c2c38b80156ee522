import hashlib

import numpy as np


def derive_seed(seed, *purpose):
    """Deterministic 63-bit sub-seed from a master seed and purpose strings."""
    text = "/".join([str(int(seed))] + [str(p) for p in purpose])
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little") >> 1


def rng_for(seed, *purpose):
    return np.random.default_rng(derive_seed(seed, *purpose))
