"""Deterministic RNG stream management.

Every stochastic component gets its own named stream derived from the run
seed, so adding or removing a consumer (e.g. a learned prior that uses
dropout) never shifts the draws seen by the others. This is what makes
agent variants bit-comparable under identical seeds.
"""

from __future__ import annotations

import numpy as np
import torch

# Fixed spawn order; appending new names keeps existing streams stable.
STREAM_NAMES = (
    "env",
    "seed_fill",
    "policy",
    "replay",
    "prior",
    "eval",
    "init_actor",
    "init_critic1",
    "init_critic2",
    "init_prior",
)


class RngStreams:
    """Named, independent RNG streams for one run seed."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        children = np.random.SeedSequence(self.seed).spawn(len(STREAM_NAMES))
        self._seqs = dict(zip(STREAM_NAMES, children))
        self._numpy: dict[str, np.random.Generator] = {}
        self._torch: dict[str, torch.Generator] = {}

    def numpy(self, name: str) -> np.random.Generator:
        if name not in self._numpy:
            self._numpy[name] = np.random.default_rng(self._seqs[name])
        return self._numpy[name]

    def torch(self, name: str) -> torch.Generator:
        if name not in self._torch:
            gen = torch.Generator()
            gen.manual_seed(int(self._seqs[name].generate_state(1, np.uint64)[0] >> 1))
            self._torch[name] = gen
        return self._torch[name]

    def episode_seed(self, stream: str) -> int:
        """Draw a fresh 63-bit seed for one episode from a named stream."""
        return int(self.numpy(stream).integers(0, 2**63 - 1))


def torch_generator(seed: int) -> torch.Generator:
    gen = torch.Generator()
    gen.manual_seed(int(seed))
    return gen
