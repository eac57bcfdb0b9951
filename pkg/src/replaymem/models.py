"""Data models for replaymem streams, memories and experiment results.

Provides strongly-typed dataclasses for stream items, memory entries, model
feedback and the records emitted by the harness.
"""

from dataclasses import asdict, dataclass, field
import math
from typing import Any

import numpy as np


@dataclass(frozen=True, slots=True)
class Example:
    """One labeled stream item."""

    stream_id: int
    task_id: int
    class_id: int | None
    tokens: tuple[int, ...]
    text: str = ""


@dataclass(slots=True, eq=False)
class MemoryEntry:
    """A stored example with its policy score.

    ``insert_ordinal`` is assigned by the buffer on a successful write and doubles
    as the entry reference used by ``MemoryBuffer.evict``.
    """

    example: Example
    score: float = 0.0
    insert_ordinal: int = -1
    batch_slot: int | None = None
    features: np.ndarray | None = None


@dataclass(frozen=True, slots=True)
class WriteReceipt:
    """Acknowledgement of a successful buffer write."""

    ordinal: int
    size: int


@dataclass
class CompositionReport:
    """Memory composition per task (or per shared-label group).

    ``raw`` holds count / |entries|; ``normalized`` divides each count by its
    class count first and renormalizes.
    """

    counts: dict[Any, int]
    raw: dict[Any, float]
    normalized: dict[Any, float]
    total: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "counts": {str(k): v for k, v in self.counts.items()},
            "raw": {str(k): v for k, v in self.raw.items()},
            "normalized": {str(k): v for k, v in self.normalized.items()},
            "total": self.total,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "CompositionReport":
        return cls(
            counts={int(k): int(v) for k, v in data["counts"].items()},
            raw={int(k): float(v) for k, v in data["raw"].items()},
            normalized={int(k): float(v) for k, v in data["normalized"].items()},
            total=int(data["total"]),
        )


@dataclass
class ModelFeedback:
    """Model outputs on an incoming batch, computed before the gradient step."""

    probs: np.ndarray
    per_example_loss: np.ndarray
    batch_mean_loss: float
    features: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.probs = np.asarray(self.probs, dtype=np.float64)
        self.per_example_loss = np.asarray(self.per_example_loss, dtype=np.float64)
        self.batch_mean_loss = float(self.batch_mean_loss)


@dataclass(frozen=True)
class TaskManifest:
    """Where a task's corpus lives and how its labels map into the global space."""

    name: str
    path: str
    class_count: int
    class_offset: int = 0
    shared_label_group: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "TaskManifest":
        return cls(
            name=str(data["name"]),
            path=str(data["path"]),
            class_count=int(data["class_count"]),
            class_offset=int(data.get("class_offset", 0)),
            shared_label_group=data.get("shared_label_group"),
        )


@dataclass
class TaskDataset:
    """A loaded task: train and test examples with global class ids."""

    name: str
    task_id: int
    class_count: int
    class_offset: int
    train: list[Example]
    test: list[Example]
    shared_label_group: str | None = None


@dataclass(frozen=True)
class TaskInfo:
    """Static description of a task inside one run, in stream order."""

    name: str
    task_id: int
    class_count: int
    shared_label_group: str | None = None


@dataclass
class RunCounters:
    """Step accounting for one run."""

    train_batches: int = 0
    replay_steps: int = 0
    new_examples: int = 0
    replayed_examples: int = 0
    skipped_replays: int = 0
    ledger: dict[int, int] = field(default_factory=dict)

    def to_dict(self) -> dict[str, int]:
        return {
            "train_batches": self.train_batches,
            "replay_steps": self.replay_steps,
            "new_examples": self.new_examples,
            "replayed_examples": self.replayed_examples,
            "skipped_replays": self.skipped_replays,
        }


@dataclass
class ExperimentRecord:
    """Everything measured in one (seed, order, policy, capacity) run.

    ``accuracy[c][p]`` is the accuracy on the task at stream position ``p`` after
    training the task at position ``c``; the last checkpoint is the stream end.
    """

    run_id: str
    seed: int
    order: str
    policy: str
    capacity_fraction: float
    tasks: list[TaskInfo]
    accuracy: list[list[float]]
    composition: list[CompositionReport]
    counters: RunCounters = field(default_factory=RunCounters)
    adapted_accuracy: list[float] | None = None
    wall_clock: dict[str, float] = field(default_factory=dict)

    @property
    def n_checkpoints(self) -> int:
        return len(self.accuracy)

    def acc_initial(self, position: int) -> float:
        return self.accuracy[position][position]

    def acc_final(self, position: int) -> float:
        return self.accuracy[-1][position]

    def final_average_accuracy(self) -> float:
        values = [a for a in self.accuracy[-1] if not math.isnan(a)]
        return float(np.mean(values)) if values else math.nan

    def to_dict(self) -> dict[str, Any]:
        return {
            "run_id": self.run_id,
            "seed": self.seed,
            "order": self.order,
            "policy": self.policy,
            "capacity_fraction": self.capacity_fraction,
            "tasks": [asdict(t) for t in self.tasks],
            "accuracy": [[None if math.isnan(a) else a for a in row] for row in self.accuracy],
            "composition": [c.to_dict() for c in self.composition],
            "counters": self.counters.to_dict(),
            "adapted_accuracy": self.adapted_accuracy,
            "wall_clock": self.wall_clock,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ExperimentRecord":
        counters = RunCounters(**data.get("counters", {}))
        return cls(
            run_id=data["run_id"],
            seed=int(data["seed"]),
            order=data["order"],
            policy=data["policy"],
            capacity_fraction=float(data["capacity_fraction"]),
            tasks=[TaskInfo(**t) for t in data["tasks"]],
            accuracy=[[math.nan if a is None else float(a) for a in row] for row in data["accuracy"]],
            composition=[CompositionReport.from_dict(c) for c in data["composition"]],
            counters=counters,
            adapted_accuracy=data.get("adapted_accuracy"),
            wall_clock={k: float(v) for k, v in data.get("wall_clock", {}).items()},
        )


@dataclass(frozen=True)
class ForgettingRecord:
    """Forgetting of one task: final drop and per-checkpoint drops."""

    task_id: int
    task: str
    acc_initial: float
    acc_final: float
    forgetting_final: float
    forgetting_step: tuple[tuple[int, float], ...]


@dataclass(frozen=True)
class SummaryRow:
    """Mean and sample standard deviation of final average accuracy."""

    order: str
    policy: str
    mean: float
    std: float
    n: int


@dataclass(frozen=True)
class UsageForgetting:
    """Paired per-task memory usage and forgetting with their rank correlation."""

    tasks: tuple[str, ...]
    usage: tuple[float, ...]
    forgetting: tuple[float, ...]
    spearman: float | None
    flag: str | None = None


@dataclass
class RunOutcome:
    """Result of one isolated run inside a sweep."""

    run_id: str
    success: bool
    record: ExperimentRecord | None = None
    error: str | None = None
