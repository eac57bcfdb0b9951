from collections.abc import Callable, Generator, Sequence
from pathlib import Path
from typing import Any

import numpy as np
import pytest

from replaymem.models import (
    CompositionReport,
    Example,
    ExperimentRecord,
    ModelFeedback,
    TaskDataset,
    TaskInfo,
)
from replaymem.utils.logger import reset_logger

ExampleFactory = Callable[..., list[Example]]


@pytest.fixture(autouse=True)
def fresh_logger(monkeypatch: pytest.MonkeyPatch) -> Generator[None, Any, None]:
    """Every test starts with a silent default logger."""
    monkeypatch.delenv("REPLAYMEM_ENABLED", raising=False)
    monkeypatch.delenv("REPLAYMEM_LOG_LEVEL", raising=False)
    monkeypatch.delenv("REPLAYMEM_THREADS", raising=False)
    reset_logger()
    yield
    reset_logger()


@pytest.fixture
def make_examples() -> ExampleFactory:
    """Build examples with consecutive stream ids.

    ``class_ids`` may be a single id or one per example; tokens default to a
    small class-specific bag.
    """

    def factory(
        n: int,
        task_id: int = 0,
        class_ids: int | Sequence[int | None] | None = 0,
        start: int = 0,
    ) -> list[Example]:
        if class_ids is None or isinstance(class_ids, int):
            labels: list[int | None] = [class_ids] * n
        else:
            labels = list(class_ids)
        return [
            Example(
                stream_id=start + i,
                task_id=task_id,
                class_id=labels[i],
                tokens=tuple(range(100 * (labels[i] or 0), 100 * (labels[i] or 0) + 5)),
            )
            for i in range(n)
        ]

    return factory


@pytest.fixture
def make_feedback() -> Callable[..., ModelFeedback]:
    """Random but valid model feedback for a batch of ``n`` examples over ``n_classes`` classes."""

    def factory(
        n: int,
        n_classes: int = 4,
        rng: np.random.Generator | None = None,
        features_dim: int | None = None,
        batch_mean_loss: float | None = None,
    ) -> ModelFeedback:
        rng = rng or np.random.default_rng(0)
        probs = rng.dirichlet(np.ones(n_classes), size=n)
        per_example = rng.exponential(1.0, size=n)
        return ModelFeedback(
            probs=probs,
            per_example_loss=per_example,
            batch_mean_loss=float(per_example.mean()) if batch_mean_loss is None else batch_mean_loss,
            features=None if features_dim is None else rng.normal(size=(n, features_dim)),
        )

    return factory


def separable_examples(
    n: int, task_id: int, class_offset: int, class_count: int, rng: np.random.Generator, start: int = 0
) -> list[Example]:
    """Examples whose tokens come mostly from a block owned by their class."""
    examples = []
    for i in range(n):
        label = class_offset + i % class_count
        signal = rng.integers(label * 50, label * 50 + 50, size=8)
        noise = rng.integers(10_000, 10_200, size=4)
        tokens = tuple(int(t) for t in np.concatenate([signal, noise]))
        examples.append(Example(stream_id=start + i, task_id=task_id, class_id=label, tokens=tokens))
    return examples


@pytest.fixture
def make_tasks() -> Callable[..., list[TaskDataset]]:
    """In-memory task datasets with disjoint label ranges."""

    def factory(
        class_counts: Sequence[int] = (2, 3, 2),
        n_train: int = 64,
        n_test: int = 20,
        seed: int = 0,
    ) -> list[TaskDataset]:
        rng = np.random.default_rng(seed)
        tasks = []
        offset = 0
        for task_id, count in enumerate(class_counts):
            tasks.append(
                TaskDataset(
                    name=f"task{task_id}",
                    task_id=task_id,
                    class_count=count,
                    class_offset=offset,
                    train=separable_examples(n_train, task_id, offset, count, rng),
                    test=separable_examples(n_test, task_id, offset, count, rng, start=n_train),
                )
            )
            offset += count
        return tasks

    return factory


@pytest.fixture
def make_record() -> Callable[..., ExperimentRecord]:
    """An ExperimentRecord from an accuracy grid ``[checkpoint][position]``."""

    def factory(
        accuracy: Sequence[Sequence[float]],
        counts: Sequence[int] | None = None,
        class_counts: Sequence[int] | None = None,
        run_id: str = "i-reservoir-c0.1-s0",
        seed: int = 0,
        order: str = "i",
        policy: str = "reservoir",
        capacity_fraction: float = 0.1,
        wall_clock: dict[str, float] | None = None,
    ) -> ExperimentRecord:
        from replaymem.memory import composition

        n_tasks = len(accuracy[0])
        class_counts = list(class_counts or [1] * n_tasks)
        counts = list(counts or [1] * n_tasks)
        report: CompositionReport = composition(dict(enumerate(counts)), dict(enumerate(class_counts)))
        return ExperimentRecord(
            run_id=run_id,
            seed=seed,
            order=order,
            policy=policy,
            capacity_fraction=capacity_fraction,
            tasks=[TaskInfo(f"task{t}", t, class_counts[t]) for t in range(n_tasks)],
            accuracy=[list(row) for row in accuracy],
            composition=[report for _ in accuracy],
            wall_clock=wall_clock or {},
        )

    return factory


@pytest.fixture
def small_spec_dict() -> dict[str, Any]:
    """A synthetic stream small enough for end-to-end CLI tests."""
    return {
        "vocab_size": 1024,
        "n_tasks": 3,
        "classes_per_task": [2, 3, 2],
        "examples_per_task": 96,
        "test_per_task": 24,
        "tokens_per_example": 12,
        "class_block_size": 16,
        "noise_block_size": 64,
        "shared_label_groups": [[0, 2]],
        "order": "i",
        "seed": 3,
    }


@pytest.fixture
def synthetic_dir(tmp_path: Path, small_spec_dict: dict[str, Any]) -> Path:
    from replaymem.data import SyntheticSpec, generate_synthetic

    out = tmp_path / "data"
    generate_synthetic(SyntheticSpec.from_dict(small_spec_dict), out)
    return out
