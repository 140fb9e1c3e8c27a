"""Deterministic random streams with cheap, collision-safe substream derivation.

Every stochastic routine in this package receives a :class:`RandomStream`
instead of a bare seed.  A stream is identified by ``(seed, substream)`` and
maps onto a counter-based Philox generator keyed by that pair, so distinct
substreams are statistically independent by construction and adding more
consumers never perturbs existing ones.

The convention used throughout: simulation routines derive one child stream
per (episode, purpose) pair, where purpose 0 is Brownian noise and purpose 1
is action sampling.  Changing the policy therefore never shifts the driving
noise of an episode.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["RandomStream", "BROWNIAN", "ACTIONS", "INIT"]

# Purpose tags for per-episode substreams.
BROWNIAN = 0
ACTIONS = 1
# Purpose tag for one-off draws such as parameter initialization.
INIT = 2

_MASK64 = (1 << 64) - 1


def _splitmix64(z: int) -> int:
    """One round of the splitmix64 mixer (public-domain constants)."""
    z = (z + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _mix(a: int, b: int) -> int:
    """Combine two 64-bit values into a well-scrambled 64-bit value."""
    return _splitmix64(_splitmix64(a & _MASK64) ^ (b & _MASK64))


@dataclass(frozen=True)
class RandomStream:
    """A named, reproducible source of randomness.

    Parameters
    ----------
    seed:
        Root seed shared by every stream of one run.
    substream:
        64-bit substream index; 0 for the root stream.
    """

    seed: int
    substream: int = 0

    def __post_init__(self) -> None:
        if not isinstance(self.seed, (int, np.integer)):
            raise TypeError(f"seed must be an integer, got {type(self.seed).__name__}")
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)
        object.__setattr__(self, "substream", int(self.substream) & _MASK64)

    def child(self, index: int) -> "RandomStream":
        """Derive the ``index``-th child stream.

        Children of distinct indices, and children of distinct parents, land on
        distinct Philox keys except for astronomically unlikely 64-bit
        collisions.
        """
        return RandomStream(self.seed, _mix(self.substream, index))

    def episode(self, episode_index: int, purpose: int) -> "RandomStream":
        """Derive the substream for one (episode, purpose) pair."""
        if episode_index < 0:
            raise ValueError("episode_index must be nonnegative")
        return self.child((episode_index << 2) | (purpose & 0x3))

    def generator(self) -> np.random.Generator:
        """Fresh numpy generator positioned at the start of this stream."""
        key = np.array([self.seed, self.substream], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))
