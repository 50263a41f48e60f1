"""Counter-based random streams keyed by (seed, purpose, index).

Every consumer asks for its own stream, so the numbers it sees never depend
on how work is split across threads or on the order of other draws.
"""
import zlib

import numpy as np


def _key(part):
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part)


def stream(seed, *parts):
    """Independent Philox generator for ``seed`` and the key ``parts``."""
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(p) for p in parts))
    return np.random.Generator(np.random.Philox(seq))
