"""Capacity-bounded episodic memory.

The buffer only stores and removes entries; deciding what to store is the job
of the population policies in ``replaymem.policies``. Entries are referenced by
their insertion ordinal. A dense slot list gives O(1) uniform sampling and
swap-removal, while per-class and per-task indices are kept in step on every
write so composition can be queried at any checkpoint.
"""

from collections.abc import Iterator, Mapping, Sequence
import math

import numpy as np

from replaymem.errors import BufferFullError, ConfigurationError, EmptyMemoryError, MemoryIndexError
from replaymem.models import CompositionReport, Example, MemoryEntry, WriteReceipt


class MemoryBuffer:
    """Episodic memory holding at most ``capacity`` examples.

    Attributes:
        capacity: Maximum number of stored examples
        per_class_index: class id -> ordered set of entry ordinals
        per_task_index: task id -> ordered set of entry ordinals
    """

    def __init__(self, capacity: int) -> None:
        if capacity < 1:
            raise ConfigurationError(f"memory capacity must be >= 1, got {capacity}")
        self.capacity = int(capacity)
        self._entries: dict[int, MemoryEntry] = {}
        self._slots: list[int] = []
        self._slot_of: dict[int, int] = {}
        self._next_ordinal = 0
        self.per_class_index: dict[int, dict[int, None]] = {}
        self.per_task_index: dict[int, dict[int, None]] = {}

    def __len__(self) -> int:
        return len(self._slots)

    def __contains__(self, ordinal: object) -> bool:
        return ordinal in self._entries

    def __iter__(self) -> Iterator[MemoryEntry]:
        return (self._entries[o] for o in self._slots)

    def __repr__(self) -> str:
        return f"MemoryBuffer(capacity={self.capacity}, size={len(self)})"

    @property
    def is_full(self) -> bool:
        return len(self._slots) >= self.capacity

    @property
    def is_empty(self) -> bool:
        return not self._slots

    def get(self, ordinal: int) -> MemoryEntry:
        try:
            return self._entries[ordinal]
        except KeyError:
            raise MemoryIndexError(f"no entry with ordinal {ordinal}") from None

    def ordinal_at(self, slot: int) -> int:
        """Ordinal stored in dense slot ``slot`` (0 <= slot < len(self))."""
        return self._slots[slot]

    def entries(self) -> list[MemoryEntry]:
        return [self._entries[o] for o in self._slots]

    def examples(self) -> list[Example]:
        return [self._entries[o].example for o in self._slots]

    def insert(self, entry: MemoryEntry) -> WriteReceipt:
        """Store an entry and assign its insertion ordinal.

        Args:
            entry: Entry to store; its ``insert_ordinal`` is overwritten

        Returns:
            WriteReceipt with the assigned ordinal

        Raises:
            BufferFullError: If the buffer is at capacity
        """
        if self.is_full:
            raise BufferFullError(f"memory is full ({self.capacity} entries); evict before inserting")
        ordinal = self._next_ordinal
        self._next_ordinal += 1
        entry.insert_ordinal = ordinal

        self._entries[ordinal] = entry
        self._slot_of[ordinal] = len(self._slots)
        self._slots.append(ordinal)

        example = entry.example
        if example.class_id is not None:
            self.per_class_index.setdefault(example.class_id, {})[ordinal] = None
        self.per_task_index.setdefault(example.task_id, {})[ordinal] = None
        return WriteReceipt(ordinal=ordinal, size=len(self._slots))

    def evict(self, ordinal: int) -> MemoryEntry:
        """Remove the entry with the given ordinal.

        Raises:
            MemoryIndexError: If no such entry is stored
        """
        entry = self._entries.pop(ordinal, None)
        if entry is None:
            raise MemoryIndexError(f"cannot evict ordinal {ordinal}: not in memory")

        slot = self._slot_of.pop(ordinal)
        last = self._slots.pop()
        if last != ordinal:
            self._slots[slot] = last
            self._slot_of[last] = slot

        example = entry.example
        if example.class_id is not None:
            _discard(self.per_class_index, example.class_id, ordinal)
        _discard(self.per_task_index, example.task_id, ordinal)
        return entry

    def sample_replay_batch(self, batch_size: int, rng: np.random.Generator) -> list[Example]:
        """Draw a replay batch uniformly at random.

        Sampling is without replacement unless the memory holds fewer than
        ``batch_size`` entries.

        Raises:
            EmptyMemoryError: If the memory holds no entries
        """
        if self.is_empty:
            raise EmptyMemoryError("memory is empty; nothing to replay")
        n = len(self._slots)
        picks = rng.choice(n, size=batch_size, replace=n < batch_size)
        return [self._entries[self._slots[i]].example for i in picks]

    def task_counts(self) -> dict[int, int]:
        return {task: len(members) for task, members in self.per_task_index.items()}

    def composition(
        self,
        class_counts: Mapping[int, int],
        group_of: Mapping[int, str] | None = None,
    ) -> CompositionReport:
        """Summarize how the memory is spread over tasks.

        Args:
            class_counts: Class count per reported key (task id, or group label when grouping)
            group_of: Optional task id -> shared-label group mapping; tasks in one group are joined

        Returns:
            CompositionReport over every key of ``class_counts``
        """
        return composition(self.task_counts(), class_counts, group_of)


def new_buffer(capacity_fraction: float, total_stream_size: int) -> MemoryBuffer:
    """Create an empty buffer sized as a fraction of the whole stream.

    Raises:
        ConfigurationError: On a fraction outside (0, 1], an empty stream, or a zero capacity
    """
    if not 0.0 < capacity_fraction <= 1.0:
        raise ConfigurationError(f"capacity_fraction must be in (0, 1], got {capacity_fraction}")
    if total_stream_size < 1:
        raise ConfigurationError(f"total stream size must be >= 1, got {total_stream_size}")
    # round away float noise such as 0.1 * 575000 = 57499.999...
    capacity = math.floor(round(capacity_fraction * total_stream_size, 9))
    if capacity < 1:
        raise ConfigurationError(
            f"capacity_fraction {capacity_fraction} of {total_stream_size} examples gives an empty memory"
        )
    return MemoryBuffer(capacity)


def composition(
    task_counts: Mapping[int, int],
    class_counts: Mapping[int, int],
    group_of: Mapping[int, str] | None = None,
) -> CompositionReport:
    """Raw and class-normalized memory shares from per-task counts."""
    counts: dict[object, int] = {key: 0 for key in class_counts}
    for task, count in task_counts.items():
        key = group_of.get(task, task) if group_of else task
        if key not in counts:
            raise ConfigurationError(f"no class count given for memory key {key!r}")
        counts[key] += count

    total = sum(counts.values())
    if total == 0:
        zeros = dict.fromkeys(counts, 0.0)
        return CompositionReport(counts=counts, raw=zeros, normalized=dict(zeros), total=0)

    raw = {key: count / total for key, count in counts.items()}
    density = {key: count / max(class_counts[key], 1) for key, count in counts.items()}
    density_sum = sum(density.values())
    normalized = {key: d / density_sum for key, d in density.items()}
    return CompositionReport(counts=counts, raw=raw, normalized=normalized, total=total)


def _discard(index: dict[int, dict[int, None]], key: int, ordinal: int) -> None:
    members = index.get(key)
    if members is None or ordinal not in members:
        raise MemoryIndexError(f"index out of sync for key {key}, ordinal {ordinal}")
    del members[ordinal]
    if not members:
        del index[key]


def stack_features(entries: Sequence[MemoryEntry]) -> np.ndarray | None:
    """Stack cached entry features, or None if any entry lacks them."""
    if not entries or any(e.features is None for e in entries):
        return None
    return np.vstack([e.features for e in entries])
