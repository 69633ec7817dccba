"""Counter-based random streams keyed by (master seed, path index).

Each path gets a Philox key built from the master seed and its index, so
its draws do not depend on scheduling or on how many paths run.  Brownian
and jump draws start from disjoint counter offsets (the top counter word),
which keeps the two sequences independent of each other's consumption.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MASK64 = (1 << 64) - 1

BROWNIAN = 0
JUMPS = 1


@dataclass(frozen=True)
class RngStream:
    master_seed: int
    path_index: int
    epoch: int = 0

    def __post_init__(self):
        if not 0 <= self.path_index <= MASK64:
            raise ValueError(f"path_index out of range: {self.path_index}")
        if not 0 <= self.epoch < (1 << 32):
            raise ValueError(f"epoch out of range: {self.epoch}")

    @property
    def key(self) -> int:
        return (self.path_index << 64) | (self.master_seed & MASK64)

    def generator(self, purpose: int) -> np.random.Generator:
        counter = [0, 0, 0, (self.epoch << 8) | purpose]
        return np.random.Generator(np.random.Philox(key=self.key, counter=counter))

    def brownian(self) -> np.random.Generator:
        return self.generator(BROWNIAN)

    def jumps(self) -> np.random.Generator:
        return self.generator(JUMPS)

    def fresh(self, epoch: int) -> "RngStream":
        """Same path, unrelated randomness (used for restarts)."""
        return RngStream(self.master_seed, self.path_index, epoch)
