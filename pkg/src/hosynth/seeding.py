"""Deterministic child seeds from a master seed and a key path."""
import zlib

import numpy as np


def _word(key):
    if isinstance(key, str):
        return zlib.crc32(key.encode("utf-8"))
    k = int(key)
    if k < 0:
        raise ValueError("seed keys must be nonnegative")
    return k


def derive_seed(master, *keys):
    """64-bit seed for ``(master, *keys)``; string keys are hashed with CRC-32.

    Tuples are flattened, so ``derive_seed(s, (1, 2, 3))`` equals
    ``derive_seed(s, 1, 2, 3)``.
    """
    words = [_word(master)]
    for k in keys:
        if isinstance(k, (tuple, list)):
            words.extend(_word(x) for x in k)
        else:
            words.append(_word(k))
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0])


def child_rng(master, *keys):
    return np.random.default_rng(derive_seed(master, *keys))
