"""Named, independent random streams derived from a single seed."""
import zlib

import numpy as np


def _key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def stream(seed: int, *names: str) -> np.random.Generator:
    """Generator for the stream addressed by ``names`` under ``seed``.

    The same (seed, names) always yields the same sequence, and adding a new
    consumer under a different name never shifts an existing one.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key(n) for n in names))
    return np.random.Generator(np.random.PCG64(ss))


class Streams:
    def __init__(self, seed: int):
        self.seed = int(seed)
        self._cache = {}

    def get(self, *names: str) -> np.random.Generator:
        if names not in self._cache:
            self._cache[names] = stream(self.seed, *names)
        return self._cache[names]
