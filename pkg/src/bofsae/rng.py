"""Portable seeded randomness.

Integer decisions that must reproduce across implementations (dataset
splits, descriptor sampling, per-stage seed expansion) use SplitMix64
(Steele, Lea & Flood 2014):

    state += 0x9E3779B97F4A7C15
    z = (state ^ (state >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    return z ^ (z >> 31)                      # all arithmetic mod 2**64

Bounded draws use the multiply-shift reduction ``(u64 * n) >> 64``.
Shuffles are Fisher-Yates from the last index down. Bulk floating-point
draws (weight initialisation, glyph jitter) use numpy's PCG64 seeded with
the stage seed.
"""

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


class SplitMix64:
    def __init__(self, seed):
        self.state = int(seed) & MASK64

    def next_u64(self):
        self.state = (self.state + _GOLDEN) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)

    def below(self, n):
        """Integer in ``[0, n)``."""
        return (self.next_u64() * n) >> 64

    def shuffle(self, items):
        """Shuffle a list in place (Fisher-Yates) and return it."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]
        return items

    def sample_indices(self, population, n):
        """First ``n`` entries of a partial Fisher-Yates over ``range(population)``."""
        n = min(n, population)
        pool = list(range(population))
        for i in range(n):
            j = i + self.below(population - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:n]


def fnv1a64(text):
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * 0x100000001B3) & MASK64
    return h


def derive_seed(root, label):
    """Expand a root seed into an independent stage seed named by ``label``."""
    return SplitMix64((int(root) & MASK64) ^ fnv1a64(label)).next_u64()


def generator(seed):
    """numpy PCG64 generator for bulk float draws."""
    return np.random.Generator(np.random.PCG64(int(seed) & MASK64))
