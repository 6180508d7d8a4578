"""Counter-based random streams.

Draw ``i`` of stream ``(seed, stream_id)`` is ``mix64(key + (i + 1) * golden)`` with
``key = mix64(seed ^ mix64((stream_id + 1) * golden))`` (SplitMix64 finaliser).  Any draw
can be recomputed from (seed, stream_id, i) alone, so particle ``p`` sees the same numbers
whichever worker runs it.
"""

import numpy as np

from . import _jit


class CounterStream:
    """A single reproducible stream; ``counter`` advances with every draw."""

    def __init__(self, seed, stream_id=0, counter=0):
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        self.key = np.uint64(_jit.stream_key(np.uint64(self.seed), np.uint64(self.stream_id)))
        self.counter = int(counter)

    def uniform(self, size=None):
        n = 1 if size is None else int(np.prod(size))
        out = _jit.uniform_block(self.key, self.counter, n)
        self.counter += n
        return float(out[0]) if size is None else out.reshape(size)

    def __repr__(self):
        return f"CounterStream(seed={self.seed}, stream_id={self.stream_id}, counter={self.counter})"


def particle_keys(seed, n, start=0):
    """Stream keys of particles ``start .. start + n - 1``."""
    return _jit.stream_keys(np.uint64(int(seed)), int(start), int(n))


def numpy_generator(seed, purpose):
    """A numpy Generator for auxiliary draws (initial laws, probe sets) tied to ``seed``."""
    tag = sum((i + 1) * ord(c) for i, c in enumerate(purpose))
    return np.random.default_rng(np.random.SeedSequence([int(seed), tag]))
