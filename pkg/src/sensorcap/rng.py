"""Seedable, splittable random number generation.

A single `Rng` is threaded through every stochastic operation (parameter
init, Gumbel noise, scheduled-sampling coins, data synthesis) so that a
run is a pure function of its seed.  `split` derives an independent child
stream from a string tag; the derivation depends only on (seed, tag), not
on how much the parent has been consumed, so adding a new consumer never
perturbs existing streams.
"""

from __future__ import annotations

import hashlib

import numpy as np


def _tag_entropy(tag: str) -> int:
    return int.from_bytes(hashlib.sha256(tag.encode("utf-8")).digest()[:16], "little")


class Rng:
    """Wrapper around numpy's PCG64 with named splitting and state capture."""

    def __init__(self, seed: int, _entropy: tuple[int, ...] | None = None):
        self.seed = int(seed)
        self._entropy = _entropy if _entropy is not None else (self.seed,)
        self._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(self._entropy))
        )

    def split(self, tag: str) -> "Rng":
        """Derive an independent child generator keyed by `tag`."""
        child = Rng.__new__(Rng)
        child.seed = self.seed
        child._entropy = self._entropy + (_tag_entropy(tag),)
        child._gen = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(child._entropy))
        )
        return child

    # -- sampling ---------------------------------------------------------

    def uniform(self, low=0.0, high=1.0, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def normal(self, loc=0.0, scale=1.0, size=None) -> np.ndarray:
        return self._gen.normal(loc, scale, size)

    def gumbel(self, size=None) -> np.ndarray:
        """Standard Gumbel noise, -log(-log u) with u ~ U(0, 1)."""
        u = self._gen.uniform(0.0, 1.0, size)
        # u == 0 has probability ~2^-53 per draw; nudge to keep logs finite.
        u = np.maximum(u, 1e-300)
        return -np.log(-np.log(u))

    def integers(self, low, high=None, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size)

    def choice(self, seq, size=None, p=None):
        return self._gen.choice(seq, size=size, p=p)

    def shuffle(self, x) -> None:
        self._gen.shuffle(x)

    # -- checkpointing ----------------------------------------------------

    def get_state(self) -> dict:
        """JSON-serializable snapshot of the live stream position."""
        return {
            "seed": self.seed,
            "entropy": list(self._entropy),
            "bit_generator": self._gen.bit_generator.state,
        }

    @classmethod
    def from_state(cls, state: dict) -> "Rng":
        rng = cls(state["seed"], _entropy=tuple(state["entropy"]))
        rng._gen.bit_generator.state = state["bit_generator"]
        return rng
