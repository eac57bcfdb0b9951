"""Reservoir sampling over the whole stream (admit with probability M/N)."""

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from replaymem.base_policy import BasePolicy, require_rng
from replaymem.memory import MemoryBuffer
from replaymem.models import Example, MemoryEntry, ModelFeedback


@dataclass
class ReservoirState:
    n_seen: int = 0


class ReservoirPolicy(BasePolicy):
    """Keeps a uniform sample of everything observed so far.

    The N-th example fills a free slot, or once the memory is full replaces the
    entry in dense slot j for j ~ U{0..N-1} whenever j < M.
    """

    name = "reservoir"

    def __init__(self) -> None:
        super().__init__()
        self.state = ReservoirState()

    def _observe(
        self,
        buffer: MemoryBuffer,
        batch: Sequence[Example],
        feedback: ModelFeedback | None,
        rng: np.random.Generator | None,
    ) -> None:
        rng = require_rng(rng, self.name)
        state = self.state
        capacity = buffer.capacity
        for example in batch:
            state.n_seen += 1
            if not buffer.is_full:
                buffer.insert(MemoryEntry(example=example))
                continue
            j = int(rng.integers(state.n_seen))
            if j < capacity:
                buffer.evict(buffer.ordinal_at(j))
                buffer.insert(MemoryEntry(example=example))
