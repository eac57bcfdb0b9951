"""Ring Buffer: per-key FIFO queues with an equal quota per discovered key."""

from collections import deque
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np

from replaymem.base_policy import KeyedPolicy, KeyMode
from replaymem.memory import MemoryBuffer
from replaymem.models import Example, MemoryEntry, ModelFeedback


@dataclass
class RingBufferState:
    keys: list[int] = field(default_factory=list)
    queues: dict[int, deque[int]] = field(default_factory=dict)
    quota: int = 0
    seen: dict[int, int] = field(default_factory=dict)


class RingBufferPolicy(KeyedPolicy):
    """Holds the most recent ``floor(M / |keys|)`` examples of every key.

    Keys (classes, or tasks in task mode) are discovered online; each discovery
    shrinks the quota and trims over-quota queues from their oldest end. The
    ``M mod |keys|`` remainder slots stay unused.
    """

    name = "ring_buffer"

    def __init__(self, key_mode: KeyMode = "class") -> None:
        super().__init__(key_mode)
        self.state = RingBufferState()

    def _discover(self, buffer: MemoryBuffer, key: int) -> None:
        state = self.state
        state.keys.append(key)
        state.queues[key] = deque()
        state.quota = buffer.capacity // len(state.keys)
        for queue in state.queues.values():
            while len(queue) > state.quota:
                buffer.evict(queue.popleft())

    def _observe(
        self,
        buffer: MemoryBuffer,
        batch: Sequence[Example],
        feedback: ModelFeedback | None,
        rng: np.random.Generator | None,
    ) -> None:
        state = self.state
        for example in batch:
            key = self.key_of(example)
            if key not in state.queues:
                self._discover(buffer, key)
            state.seen[key] = state.seen.get(key, 0) + 1
            if state.quota == 0:
                continue
            queue = state.queues[key]
            if len(queue) >= state.quota:
                buffer.evict(queue.popleft())
            receipt = buffer.insert(MemoryEntry(example=example))
            queue.append(receipt.ordinal)
