"""Counter-based random number streams.

Every stochastic routine in this package draws from a pure function of
``(master_seed, stream_id, counter)``.  Replicate k of an experiment always
uses stream_id k, so results are independent of scheduling, worker count and
batching.  The mixer is a double application of the splitmix64 finalizer,
which passes the usual avalanche checks and is cheap enough to inline in
compiled kernels (see _kernels.py for the jitted twin).
"""

from __future__ import annotations

import numpy as np

_MASK = 0xFFFFFFFFFFFFFFFF
_GOLDEN = 0x9E3779B97F4A7C15


def _mix64(z: int) -> int:
    z = (z + _GOLDEN) & _MASK
    z ^= z >> 30
    z = (z * 0xBF58476D1CE4E5B9) & _MASK
    z ^= z >> 27
    z = (z * 0x94D049BB133111EB) & _MASK
    z ^= z >> 31
    return z


def counter_u64(master_seed: int, stream_id: int, counter: int) -> int:
    """The raw generator: uint64 output, pure in all three arguments."""
    key = _mix64((master_seed & _MASK) ^ 0x5851F42D4C957F2D)
    key = _mix64(key ^ (stream_id & _MASK))
    return _mix64(key ^ _mix64(counter & _MASK))


def stream_key(master_seed: int, stream_id: int) -> int:
    """64-bit key identifying (master_seed, stream_id); feeds kernels and Philox."""
    key = _mix64((master_seed & _MASK) ^ 0x5851F42D4C957F2D)
    return _mix64(key ^ (stream_id & _MASK))


class RngStream:
    """Sequential view of one counter-based stream.

    The stream state is just the counter; ``RngStream(seed, k)`` restarted
    from scratch replays the identical sequence.
    """

    __slots__ = ("master_seed", "stream_id", "_key", "counter")

    def __init__(self, master_seed: int, stream_id: int = 0, counter: int = 0):
        self.master_seed = master_seed & _MASK
        self.stream_id = stream_id & _MASK
        self._key = stream_key(master_seed, stream_id)
        self.counter = counter

    def substream(self, substream_id: int) -> "RngStream":
        """Derive a child stream; used to give each walker its own stream."""
        return RngStream(self._key, substream_id)

    def next_u64(self) -> int:
        out = _mix64(self._key ^ _mix64(self.counter))
        self.counter += 1
        return out

    def uniform(self) -> float:
        """Standard uniform in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (2.0**-53)

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n), unbiased via rejection."""
        if n <= 0:
            raise ValueError("randint needs n >= 1")
        limit = (_MASK + 1) - ((_MASK + 1) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def choice(self, seq):
        return seq[self.randint(len(seq))]

    def numpy_generator(self) -> np.random.Generator:
        """Bulk-draw companion: a Philox generator keyed by this stream.

        Philox is itself counter-based, so the pair (stream key, Philox
        counter) keeps the purity contract for vectorized draws.
        """
        return np.random.Generator(np.random.Philox(key=self._key))
