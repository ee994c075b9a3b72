"""Reproducible, splittable random streams."""

import zlib

import numpy as np


def stream_key(*parts):
    """Stable 32-bit key for a tuple of names/ints (independent of PYTHONHASHSEED)."""
    return zlib.crc32("\x1f".join(str(p) for p in parts).encode())


def make_rng(seed=None, *parts):
    """Counter-based generator for the stream ``(seed, *parts)``.

    Streams named by distinct ``parts`` are statistically independent, and
    adding a new stream never perturbs an existing one.
    """
    if isinstance(seed, np.random.Generator):
        if parts:
            raise TypeError("cannot derive a named stream from a Generator")
        return seed
    entropy = [0 if seed is None else int(seed)]
    if parts:
        entropy.append(stream_key(*parts))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def check_rng(random_state):
    """Accept None, an int or a Generator, sklearn style."""
    if random_state is None:
        return np.random.default_rng()
    return make_rng(random_state)
