"""Naive Random: admit each incoming example with a fixed probability."""

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from replaymem.base_policy import BasePolicy, require_rng
from replaymem.errors import ConfigurationError
from replaymem.memory import MemoryBuffer
from replaymem.models import Example, MemoryEntry, ModelFeedback


@dataclass
class NaiveRandomState:
    store_probability: float
    n_seen: int = 0
    n_admitted: int = 0


class NaiveRandomPolicy(BasePolicy):
    """Independent Bernoulli(p) admission; a full memory overwrites a uniform random victim.

    ``p`` defaults to the memory capacity fraction, so each task contributes in
    proportion to its size.
    """

    name = "naive_random"

    def __init__(self, store_probability: float) -> None:
        super().__init__()
        if not 0.0 <= store_probability <= 1.0:
            raise ConfigurationError(f"store_probability must be in [0, 1], got {store_probability}")
        self.state = NaiveRandomState(store_probability=float(store_probability))

    def _observe(
        self,
        buffer: MemoryBuffer,
        batch: Sequence[Example],
        feedback: ModelFeedback | None,
        rng: np.random.Generator | None,
    ) -> None:
        rng = require_rng(rng, self.name)
        state = self.state
        admitted = rng.random(len(batch)) < state.store_probability
        state.n_seen += len(batch)
        for example, admit in zip(batch, admitted, strict=True):
            if not admit:
                continue
            if buffer.is_full:
                victim = buffer.ordinal_at(int(rng.integers(len(buffer))))
                buffer.evict(victim)
            buffer.insert(MemoryEntry(example=example))
            state.n_admitted += 1
