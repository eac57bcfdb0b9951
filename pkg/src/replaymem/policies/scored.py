"""Lazy-deletion heap over stored entry scores.

Surprise keeps the highest scores and evicts the minimum; Minimum Margin keeps
the lowest and evicts the maximum. Entries evicted elsewhere stay in the heap
until they surface and are discarded.
"""

import heapq
from typing import Literal

from replaymem.memory import MemoryBuffer


class ScoreHeap:
    """Heap exposing the extreme stored score; ties resolve to the oldest entry."""

    def __init__(self, extreme: Literal["min", "max"]) -> None:
        self._sign = 1.0 if extreme == "min" else -1.0
        self._heap: list[tuple[float, int]] = []

    def __len__(self) -> int:
        return len(self._heap)

    def push(self, score: float, ordinal: int) -> None:
        heapq.heappush(self._heap, (self._sign * score, ordinal))

    def peek(self, buffer: MemoryBuffer) -> tuple[float, int] | None:
        """Return ``(score, ordinal)`` of the extreme live entry, or None."""
        heap = self._heap
        while heap and heap[0][1] not in buffer:
            heapq.heappop(heap)
        if not heap:
            return None
        key, ordinal = heap[0]
        return self._sign * key, ordinal

    def pop(self, buffer: MemoryBuffer) -> tuple[float, int] | None:
        top = self.peek(buffer)
        if top is not None:
            heapq.heappop(self._heap)
        return top

    def compact(self, buffer: MemoryBuffer) -> None:
        """Drop stale items once they dominate the heap."""
        if len(self._heap) > 2 * max(len(buffer), 1):
            self._heap = [item for item in self._heap if item[1] in buffer]
            heapq.heapify(self._heap)
