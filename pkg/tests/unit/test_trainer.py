"""Tests for the lifelong learning loop, evaluation and local adaptation."""

from collections.abc import Callable, Sequence
import math
from typing import Any, Self

import numpy as np
import pytest
from pytest_mock import MockerFixture

from replaymem.config import ExperimentConfig, LocalAdaptationParams, config_from_dict
from replaymem.errors import ConfigurationError, EmptyMemoryError, UndefinedAccuracyError
from replaymem.learner import HashedBowLearner, LearnerInterface
from replaymem.memory import MemoryBuffer
from replaymem.metrics import record_rows
from replaymem.models import Example, MemoryEntry, ModelFeedback, TaskDataset
from replaymem.trainer import evaluate, local_adapt, make_run_id, order_tasks, run_experiment, training_order
from replaymem.utils.logger import ReplayLogger, set_logger
from replaymem.utils.rng import spawn_streams

TaskFactory = Callable[..., list[TaskDataset]]


class RecordingLearner(LearnerInterface):
    """Uniform predictor that logs every call the harness makes."""

    def __init__(self, n_classes: int = 7, dim: int = 4) -> None:
        self.n_classes = n_classes
        self.dim = dim
        self.events: list[tuple[str, tuple[int, ...]]] = []

    def predict_proba(self, batch: Sequence[Example]) -> np.ndarray:
        return np.full((len(batch), self.n_classes), 1.0 / self.n_classes)

    def loss(self, batch: Sequence[Example]) -> tuple[np.ndarray, float]:
        per_example = np.array([1.0 + (e.stream_id % 5) for e in batch])
        return per_example, float(per_example.mean())

    def features(self, batch: Sequence[Example]) -> np.ndarray:
        return np.zeros((len(batch), self.dim))

    def feedback(self, batch: Sequence[Example], with_features: bool = False) -> ModelFeedback:
        self.events.append(("feedback", tuple(e.stream_id for e in batch)))
        return super().feedback(batch, with_features)

    def train_step(self, batch: Sequence[Example]) -> float:
        self.events.append(("train", tuple(e.stream_id for e in batch)))
        return 0.0

    def gradients(self, batch: Sequence[Example]) -> list[np.ndarray]:
        return [np.zeros(1)]

    def parameters(self) -> list[np.ndarray]:
        return [np.zeros(1)]

    def set_parameters(self, params: Sequence[np.ndarray]) -> None:
        pass

    def clone(self) -> Self:
        return type(self)(self.n_classes, self.dim)


def _config(**overrides: Any) -> ExperimentConfig:
    data: dict[str, Any] = {"batch_size": 8, "replay_every": 3, "learner": {"dim": 256, "learning_rate": 0.05}}
    data.update(overrides)
    return config_from_dict(data)


class TestTrainingLoop:
    def test_feedback_precedes_every_update(self, make_tasks: TaskFactory) -> None:
        learner = RecordingLearner()
        run_experiment(_config(policy={"name": "surprise"}), make_tasks(), learner=learner)
        trained_new = 0
        for i, (kind, ids) in enumerate(learner.events):
            if kind == "feedback":
                assert learner.events[i + 1] == ("train", ids)
                trained_new += 1
        assert trained_new == 24

    def test_replay_cadence(self, make_tasks: TaskFactory) -> None:
        learner = RecordingLearner(n_classes=2)
        config = _config(batch_size=1, replay_every=10, capacity_fraction=0.1)
        record = run_experiment(config, make_tasks(class_counts=(2,), n_train=1000, n_test=4), learner=learner)
        assert record.counters.train_batches == 1000
        assert record.counters.replay_steps == 100
        assert record.counters.skipped_replays == 0
        assert sum(kind == "train" for kind, _ in learner.events) == 1100
        assert record.counters.replayed_examples == 100

    def test_new_examples_are_trained_exactly_once(self, make_tasks: TaskFactory) -> None:
        record = run_experiment(_config(), make_tasks(), learner=RecordingLearner())
        assert record.counters.ledger == {i: 1 for i in range(192)}
        assert record.counters.new_examples == 192

    def test_full_capacity_reservoir_keeps_the_stream(self, make_tasks: TaskFactory) -> None:
        record = run_experiment(_config(capacity_fraction=1.0), make_tasks(), learner=RecordingLearner())
        final = record.composition[-1]
        assert final.total == 192
        assert final.counts == {0: 64, 1: 64, 2: 64}

    def test_zero_store_probability_skips_replay(self, make_tasks: TaskFactory) -> None:
        config = _config(policy={"name": "naive_random", "store_probability": 0.0})
        record = run_experiment(config, make_tasks(), learner=RecordingLearner())
        assert record.counters.replay_steps == 0
        assert record.counters.skipped_replays == 24 // 3
        assert record.composition[-1].total == 0

    def test_record_shape(self, make_tasks: TaskFactory) -> None:
        record = run_experiment(_config(order="x", seed=4), make_tasks())
        assert record.run_id == make_run_id("x", "reservoir", 0.1, 4) == "x-reservoir-c0.1-s4"
        assert len(record.accuracy) == 3
        assert all(len(row) == 3 for row in record.accuracy)
        assert len(record.composition) == 3
        assert record.composition[0].counts[1] == 0
        assert set(record.wall_clock) == {"train", "evaluate"}
        assert record.adapted_accuracy is None

    def test_reruns_are_identical(self, make_tasks: TaskFactory) -> None:
        config = _config(policy={"name": "mof"})
        first = run_experiment(config, make_tasks())
        second = run_experiment(config, make_tasks())
        assert record_rows(first) == record_rows(second)

    def test_adapted_accuracy_is_reported(self, make_tasks: TaskFactory) -> None:
        config = _config(
            capacity_fraction=0.3,
            local_adaptation={"k": 4, "steps": 2, "reg": 0.01, "adapt_lr": 0.05},
            evaluate_local_adaptation=True,
        )
        record = run_experiment(config, make_tasks(n_test=6))
        assert record.adapted_accuracy is not None
        assert len(record.adapted_accuracy) == 3
        assert "adapt" in record.wall_clock

    def test_run_log_lines_carry_the_run_id(
        self, make_tasks: TaskFactory, capsys: pytest.CaptureFixture[str]
    ) -> None:
        set_logger(ReplayLogger(name="replaymem.test.trainer", enabled=True, level="INFO"))
        run_experiment(_config(order="x", seed=2), make_tasks(), learner=RecordingLearner())
        lines = [line for line in capsys.readouterr().out.splitlines() if line.strip()]
        assert lines
        assert all(line.startswith("[x-reservoir-c0.1-s2] ") for line in lines)
        assert any("[SUCCESS]" in line for line in lines)

    def test_separable_stream_is_learned(self, make_tasks: TaskFactory) -> None:
        record = run_experiment(_config(capacity_fraction=0.5, replay_every=1), make_tasks(n_train=128))
        assert record.final_average_accuracy() > 0.4


class TestTrainingOrder:
    def test_seed_changes_the_order(self, make_tasks: TaskFactory) -> None:
        task = make_tasks()[1]
        orders = {tuple(e.stream_id for e in training_order(_config(seed=s), task)) for s in range(4)}
        assert len(orders) == 4
        assert all(sorted(order) == [e.stream_id for e in task.train] for order in orders)

    def test_same_seed_same_order(self, make_tasks: TaskFactory) -> None:
        task = make_tasks()[0]
        assert training_order(_config(seed=3), task) == training_order(_config(seed=3), task)

    def test_tasks_are_shuffled_independently(self, make_tasks: TaskFactory) -> None:
        first, second = make_tasks(class_counts=(2, 2))
        a = [e.stream_id for e in training_order(_config(), first)]
        b = [e.stream_id for e in training_order(_config(), second)]
        assert a != b

    def test_file_order_when_disabled(self, make_tasks: TaskFactory) -> None:
        task = make_tasks()[2]
        assert training_order(_config(shuffle_train=False), task) == list(task.train)

    def test_seed_changes_what_the_first_batch_streams(self, make_tasks: TaskFactory) -> None:
        tasks = make_tasks(class_counts=(3,), n_train=96)
        labels = []
        for seed in (0, 1):
            learner = RecordingLearner()
            record = run_experiment(_config(seed=seed, capacity_fraction=1.0), tasks, learner=learner)
            assert record.counters.ledger == {i: 1 for i in range(96)}
            labels.append(tuple(e.class_id for e in training_order(_config(seed=seed), tasks[0])[:8]))
        assert labels[0] != labels[1]


class TestOrderTasks:
    def test_explicit_order(self, make_tasks: TaskFactory) -> None:
        ordered = order_tasks(_config(task_order=["task2", "task0", "task1"]), make_tasks())
        assert [t.name for t in ordered] == ["task2", "task0", "task1"]

    def test_given_order_is_the_fallback(self, make_tasks: TaskFactory) -> None:
        tasks = make_tasks()[::-1]
        assert order_tasks(_config(), tasks) == tasks

    def test_mismatch(self, make_tasks: TaskFactory) -> None:
        with pytest.raises(ConfigurationError, match="does not match"):
            order_tasks(_config(task_order=["task0", "task1"]), make_tasks())

    def test_stream_ids_follow_the_order(self, make_tasks: TaskFactory) -> None:
        learner = RecordingLearner()
        run_experiment(_config(task_order=["task1", "task0", "task2"]), make_tasks(), learner=learner)
        first_ids = next(ids for kind, ids in learner.events if kind == "train")
        assert first_ids == tuple(range(8))


class TestEvaluate:
    def test_empty_test_set(self, make_examples: Callable[..., list[Example]]) -> None:
        learner = HashedBowLearner(n_classes=2, dim=16)
        with pytest.raises(UndefinedAccuracyError):
            evaluate(learner, [make_examples(2), []])
        results = evaluate(learner, [make_examples(2), []], skip_empty=True)
        assert results[0] == 1.0
        assert math.isnan(results[1])

    def test_adaptation_needs_memory(self, make_examples: Callable[..., list[Example]]) -> None:
        learner = HashedBowLearner(n_classes=2, dim=16)
        with pytest.raises(ConfigurationError):
            evaluate(learner, [make_examples(2)], adaptation=LocalAdaptationParams())
        with pytest.raises(EmptyMemoryError):
            evaluate(learner, [make_examples(2)], buffer=MemoryBuffer(4), adaptation=LocalAdaptationParams())


def _memory(examples: Sequence[Example]) -> MemoryBuffer:
    buffer = MemoryBuffer(max(1, len(examples)))
    for example in examples:
        buffer.insert(MemoryEntry(example=example))
    return buffer


def _trained_learner(tasks: list[TaskDataset]) -> HashedBowLearner:
    learner = HashedBowLearner(n_classes=7, dim=256, learning_rate=0.05)
    train = [e for t in tasks for e in t.train]
    for _ in range(5):
        for start in range(0, len(train), 16):
            learner.train_step(train[start : start + 16])
    return learner


class TestLocalAdaptation:
    def test_zero_steps_is_the_base_prediction(self, make_tasks: TaskFactory) -> None:
        tasks = make_tasks()
        learner = _trained_learner(tasks)
        buffer = _memory(tasks[0].train[:20])
        params = LocalAdaptationParams(k=5, steps=0)
        base = learner.predict(tasks[1].test)
        adapted = [local_adapt(learner, buffer, e, params) for e in tasks[1].test]
        assert adapted == base.tolist()

    def test_huge_regularization_keeps_the_base_prediction(self, make_tasks: TaskFactory) -> None:
        tasks = make_tasks()
        learner = _trained_learner(tasks)
        buffer = _memory(tasks[2].train[:30])
        params = LocalAdaptationParams(k=8, steps=5, reg=1e9, adapt_lr=0.1)
        test = tasks[0].test + tasks[1].test
        assert evaluate(learner, [test], buffer=buffer, adaptation=params) == evaluate(learner, [test])

    def test_single_class_memory_pulls_predictions(self, make_tasks: TaskFactory) -> None:
        tasks = make_tasks()
        learner = HashedBowLearner(n_classes=7, dim=256)
        one_class = [e for e in tasks[1].train if e.class_id == 3][:10]
        buffer = _memory(one_class)
        params = LocalAdaptationParams(k=10, steps=50, reg=0.0, adapt_lr=0.5)
        assert all(local_adapt(learner, buffer, e, params) == 3 for e in tasks[2].test[:5])

    def test_base_learner_is_untouched(self, make_tasks: TaskFactory) -> None:
        tasks = make_tasks()
        learner = _trained_learner(tasks)
        before = learner.parameters()
        local_adapt(learner, _memory(tasks[0].train[:5]), tasks[0].test[0], LocalAdaptationParams(steps=3))
        for a, b in zip(before, learner.parameters(), strict=True):
            np.testing.assert_array_equal(a, b)

    def test_empty_memory(self, make_examples: Callable[..., list[Example]]) -> None:
        learner = HashedBowLearner(n_classes=2, dim=16)
        with pytest.raises(EmptyMemoryError):
            local_adapt(learner, MemoryBuffer(3), make_examples(1)[0], LocalAdaptationParams())

    def test_k_beyond_memory_uses_every_entry(self, make_tasks: TaskFactory, mocker: MockerFixture) -> None:
        tasks = make_tasks()
        learner = HashedBowLearner(n_classes=7, dim=256)
        buffer = _memory(tasks[0].train[:3])
        spy = mocker.spy(HashedBowLearner, "gradients")
        local_adapt(learner, buffer, tasks[0].test[0], LocalAdaptationParams(k=10, steps=1))
        neighbours = spy.call_args.args[-1]
        assert sorted(e.stream_id for e in neighbours) == [0, 1, 2]

    def test_nearest_entries_are_retrieved(self, mocker: MockerFixture) -> None:
        near = Example(stream_id=0, task_id=0, class_id=0, tokens=(1, 2, 3))
        far = Example(stream_id=1, task_id=0, class_id=1, tokens=(7, 8, 9))
        query = Example(stream_id=2, task_id=0, class_id=0, tokens=(1, 2, 3))
        learner = HashedBowLearner(n_classes=2, dim=1024)
        spy = mocker.spy(HashedBowLearner, "gradients")
        local_adapt(learner, _memory([far, near]), query, LocalAdaptationParams(k=1, steps=1))
        assert [e.stream_id for e in spy.call_args.args[-1]] == [0]


def test_random_streams_are_independent() -> None:
    first, second = spawn_streams(7), spawn_streams(7)
    assert first["policy"].integers(1 << 30) == second["policy"].integers(1 << 30)
    streams = spawn_streams(7)
    assert streams["policy"].integers(1 << 30, size=4).tolist() != streams["replay"].integers(1 << 30, size=4).tolist()
