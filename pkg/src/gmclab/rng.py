"""Counter-based random streams.

Every stochastic routine in gmclab takes a :class:`RandomStream`. A stream is
identified by ``(base_seed, stream_id)`` and maps to a Philox generator keyed
by a :class:`numpy.random.SeedSequence`, so replicate ``i`` of an experiment
draws the same numbers regardless of how replicates are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class RandomStream:
    base_seed: int
    stream_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "base_seed", int(self.base_seed) & _MASK64)
        object.__setattr__(self, "stream_id", int(self.stream_id) & _MASK64)

    def generator(self) -> np.random.Generator:
        """Fresh generator positioned at the start of this stream."""
        seq = np.random.SeedSequence([self.base_seed, self.stream_id])
        return np.random.Generator(np.random.Philox(seq))

    def child(self, tag: int) -> "RandomStream":
        """Independent sub-stream, e.g. for a second ingredient of one replicate.

        The child is keyed by a hash of ``(stream_id, tag)`` so it cannot
        collide with the plain replicate streams ``0, 1, 2, ...``.
        """
        seq = np.random.SeedSequence([self.base_seed, self.stream_id, int(tag), 0x5EED])
        sid = int(seq.generate_state(2, dtype=np.uint32).view(np.uint64)[0])
        return RandomStream(self.base_seed, sid)

    def spawn(self, n: int) -> list["RandomStream"]:
        return [self.child(i) for i in range(n)]


def as_generator(stream) -> np.random.Generator:
    """Accept a RandomStream, a Generator, or an int seed."""
    if isinstance(stream, np.random.Generator):
        return stream
    if isinstance(stream, RandomStream):
        return stream.generator()
    return RandomStream(int(stream)).generator()
