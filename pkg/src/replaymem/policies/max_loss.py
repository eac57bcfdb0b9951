"""Maximum Loss: store and override whole batches ranked by mean loss."""

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import cast

import numpy as np

from replaymem.base_policy import BasePolicy
from replaymem.errors import ConfigurationError
from replaymem.memory import MemoryBuffer
from replaymem.models import Example, MemoryEntry, ModelFeedback


@dataclass
class BatchSlot:
    score: float
    ordinals: list[int]


@dataclass
class MaxLossState:
    slot_count: int = 0
    slots: dict[int, BatchSlot] = field(default_factory=dict)


class MaxLossPolicy(BasePolicy):
    """Organizes the memory as ``floor(M / batch_size)`` batch slots.

    While slots are free the incoming batch is stored whole with its mean loss
    as slot score; afterwards it replaces the minimum-score slot only if its
    mean loss is strictly higher.
    """

    name = "max_loss"
    requires_feedback = True

    def __init__(self, batch_size: int) -> None:
        super().__init__()
        if batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {batch_size}")
        self.batch_size = int(batch_size)
        self.state = MaxLossState()
        self._bound_capacity: int | None = None

    def _bind(self, buffer: MemoryBuffer) -> None:
        if self._bound_capacity == buffer.capacity:
            return
        if self.batch_size > buffer.capacity:
            raise ConfigurationError(
                f"max_loss batch size {self.batch_size} exceeds memory capacity {buffer.capacity}"
            )
        self._bound_capacity = buffer.capacity
        self.state.slot_count = buffer.capacity // self.batch_size

    def min_slot(self) -> tuple[int, BatchSlot] | None:
        if not self.state.slots:
            return None
        # ties resolve to the lowest (oldest-assigned) slot id
        slot_id = min(self.state.slots, key=lambda s: (self.state.slots[s].score, s))
        return slot_id, self.state.slots[slot_id]

    def _observe(
        self,
        buffer: MemoryBuffer,
        batch: Sequence[Example],
        feedback: ModelFeedback | None,
        rng: np.random.Generator | None,
    ) -> None:
        self._bind(buffer)
        if len(batch) > self.batch_size:
            raise ConfigurationError(f"batch of {len(batch)} exceeds max_loss slot size {self.batch_size}")
        feedback = cast(ModelFeedback, feedback)
        score = feedback.batch_mean_loss
        state = self.state

        free = [s for s in range(state.slot_count) if s not in state.slots]
        if free:
            slot_id = free[0]
        else:
            weakest = self.min_slot()
            if weakest is None or score <= weakest[1].score:
                return
            slot_id = weakest[0]
            for ordinal in weakest[1].ordinals:
                buffer.evict(ordinal)
            del state.slots[slot_id]

        ordinals = [
            buffer.insert(MemoryEntry(example=example, score=score, batch_slot=slot_id)).ordinal for example in batch
        ]
        state.slots[slot_id] = BatchSlot(score=score, ordinals=ordinals)
