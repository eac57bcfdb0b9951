"""The lifelong learning loop.

Tasks are streamed once, in order, in batches; within a task the examples are
shuffled per seed unless ``shuffle_train`` is off. For each batch the learner's
feedback is computed before its update, the policy decides what to store, the
learner takes one step, and every ``replay_every``-th batch one memory batch is
replayed. After each task every test set is evaluated and the memory
composition is snapshotted.
"""

from collections.abc import Sequence
import dataclasses
import time
from typing import cast

import numpy as np

from replaymem.base_policy import BasePolicy, KeyMode
from replaymem.config import ExperimentConfig, LearnerParams, LocalAdaptationParams
from replaymem.errors import ConfigurationError, EmptyMemoryError, UndefinedAccuracyError
from replaymem.learner import HashedBowLearner, LearnerInterface
from replaymem.memory import MemoryBuffer, new_buffer, stack_features
from replaymem.models import CompositionReport, Example, ExperimentRecord, RunCounters, TaskDataset, TaskInfo
from replaymem.policies import build_policy
from replaymem.utils.logger import get_logger
from replaymem.utils.rng import SHUFFLE, spawn_streams, task_generator


def make_run_id(order: str, policy: str, capacity_fraction: float, seed: int) -> str:
    return f"{order}-{policy}-c{capacity_fraction:g}-s{seed}"


def build_learner(params: LearnerParams, n_classes: int) -> HashedBowLearner:
    return HashedBowLearner(
        n_classes=n_classes,
        dim=params.dim,
        learning_rate=params.learning_rate,
        hash_seed=params.hash_seed,
        beta1=params.beta1,
        beta2=params.beta2,
        eps=params.eps,
        alternate_sign=params.alternate_sign,
    )


def order_tasks(config: ExperimentConfig, tasks: Sequence[TaskDataset]) -> list[TaskDataset]:
    """Arrange loaded tasks in stream order.

    Raises:
        ConfigurationError: If the configured order does not match the task names
    """
    by_name = {t.name: t for t in tasks}
    if len(by_name) != len(tasks):
        raise ConfigurationError("task names must be unique")
    if config.manifests:
        names = config.resolved_task_order()
    elif config.task_order is not None:
        names = list(config.task_order)
    else:
        names = [t.name for t in tasks]
    if sorted(names) != sorted(by_name):
        raise ConfigurationError(f"task order {names} does not match the loaded tasks {sorted(by_name)}")
    return [by_name[name] for name in names]


def _restamp(train: Sequence[Example], start: int) -> list[Example]:
    return [dataclasses.replace(example, stream_id=start + i) for i, example in enumerate(train)]


def training_order(config: ExperimentConfig, task: TaskDataset) -> list[Example]:
    """The task's training examples in the order they are streamed.

    File order unless ``config.shuffle_train``, in which case the permutation is
    drawn from ``task_generator(config.seed, task.task_id, SHUFFLE)``: the same
    seed and task always stream identically, whatever the policy.
    """
    if not config.shuffle_train:
        return list(task.train)
    perm = task_generator(config.seed, task.task_id, SHUFFLE).permutation(len(task.train))
    return [task.train[i] for i in perm]


def run_experiment(
    config: ExperimentConfig,
    tasks: Sequence[TaskDataset],
    learner: LearnerInterface | None = None,
    policy: BasePolicy | None = None,
) -> ExperimentRecord:
    """Run one single-pass lifelong learning experiment.

    Args:
        config: Validated experiment configuration
        tasks: Loaded task datasets, in any order
        learner: Learner to train; built from ``config.learner`` when omitted
        policy: Population policy; built from ``config.policy`` when omitted

    Returns:
        ExperimentRecord with one accuracy row and composition snapshot per task

    Raises:
        ConfigurationError: On an invalid order, capacity or policy setup
    """
    logger = get_logger()
    ordered = order_tasks(config, tasks)
    n_classes = max(t.class_offset + t.class_count for t in ordered)
    total = sum(len(t.train) for t in ordered)

    buffer = new_buffer(config.capacity_fraction, total)
    if policy is None:
        policy = build_policy(
            config.policy.name,
            capacity_fraction=config.capacity_fraction,
            batch_size=config.batch_size,
            key_mode=cast(KeyMode, config.policy.key_mode),
            store_probability=config.policy.store_probability,
        )
    if learner is None:
        learner = build_learner(config.learner, n_classes)
    streams = spawn_streams(config.seed)
    run_id = make_run_id(config.order_label, policy.name, config.capacity_fraction, config.seed)

    infos = [TaskInfo(t.name, t.task_id, t.class_count, t.shared_label_group) for t in ordered]
    class_counts = {t.task_id: t.class_count for t in ordered}
    test_sets = [t.test for t in ordered]
    counters = RunCounters()
    accuracy: list[list[float]] = []
    snapshots: list[CompositionReport] = []
    wall_clock = {"train": 0.0, "evaluate": 0.0}

    with (
        logger.run_context(run_id),
        logger.section(f"{len(ordered)} tasks, {total} examples, memory {buffer.capacity}"),
    ):
        next_stream_id = 0
        for position, task in enumerate(ordered):
            with logger.subsection(f"Task {position}: {task.name}"):
                train = _restamp(training_order(config, task), next_stream_id)
                next_stream_id += len(train)

                started = time.perf_counter()
                for start in range(0, len(train), config.batch_size):
                    batch = train[start : start + config.batch_size]
                    feedback = (
                        learner.feedback(batch, with_features=policy.requires_features)
                        if policy.requires_feedback
                        else None
                    )
                    policy.observe_batch(buffer, batch, feedback, rng=streams["policy"])
                    learner.train_step(batch)
                    counters.train_batches += 1
                    counters.new_examples += len(batch)
                    for example in batch:
                        counters.ledger[example.stream_id] = counters.ledger.get(example.stream_id, 0) + 1

                    if counters.train_batches % config.replay_every == 0:
                        _replay(learner, buffer, config.batch_size, streams["replay"], counters)
                wall_clock["train"] += time.perf_counter() - started

                started = time.perf_counter()
                accuracy.append(evaluate(learner, test_sets, skip_empty=True))
                wall_clock["evaluate"] += time.perf_counter() - started
                snapshot = buffer.composition(class_counts)
                snapshots.append(snapshot)
                logger.info(f"accuracy {_fmt(accuracy[-1])}; memory {snapshot.total}/{buffer.capacity}")

        adapted: list[float] | None = None
        if config.evaluate_local_adaptation and config.local_adaptation is not None:
            started = time.perf_counter()
            adapted = evaluate(learner, test_sets, buffer=buffer, adaptation=config.local_adaptation, skip_empty=True)
            wall_clock["adapt"] = time.perf_counter() - started
            logger.info(f"adapted accuracy {_fmt(adapted)}")

        logger.success(
            f"{counters.train_batches} batches, {counters.replay_steps} replay steps, "
            f"{counters.skipped_replays} skipped, {wall_clock['train']:.2f}s training"
        )

    return ExperimentRecord(
        run_id=run_id,
        seed=config.seed,
        order=config.order_label,
        policy=policy.name,
        capacity_fraction=config.capacity_fraction,
        tasks=infos,
        accuracy=accuracy,
        composition=snapshots,
        counters=counters,
        adapted_accuracy=adapted,
        wall_clock=wall_clock,
    )


def _replay(
    learner: LearnerInterface,
    buffer: MemoryBuffer,
    batch_size: int,
    rng: np.random.Generator,
    counters: RunCounters,
) -> None:
    try:
        replay = buffer.sample_replay_batch(batch_size, rng)
    except EmptyMemoryError:
        counters.skipped_replays += 1
        get_logger().warning(f"memory empty at batch {counters.train_batches}; replay skipped")
        return
    # replayed examples are never offered to the policy again
    learner.train_step(replay)
    counters.replay_steps += 1
    counters.replayed_examples += len(replay)


def _fmt(values: Sequence[float]) -> str:
    return "[" + ", ".join(f"{v:.3f}" for v in values) + "]"


def evaluate(
    learner: LearnerInterface,
    test_sets: Sequence[Sequence[Example]],
    buffer: MemoryBuffer | None = None,
    adaptation: LocalAdaptationParams | None = None,
    skip_empty: bool = False,
) -> list[float]:
    """Accuracy on each test set.

    Args:
        learner: Trained learner
        test_sets: One sequence of examples per task
        buffer: Memory for local adaptation
        adaptation: When given, every example is predicted by a locally adapted copy
        skip_empty: Report NaN for an empty test set instead of raising

    Returns:
        Accuracy in [0, 1] per test set

    Raises:
        UndefinedAccuracyError: On an empty test set unless ``skip_empty``
        EmptyMemoryError: If adaptation is requested over an empty memory
    """
    if adaptation is not None and buffer is None:
        raise ConfigurationError("local adaptation needs a memory buffer")
    memory_features = None
    if adaptation is not None and buffer is not None:
        if buffer.is_empty:
            raise EmptyMemoryError("local adaptation needs a non-empty memory")
        memory_features = memory_feature_matrix(learner, buffer)

    results: list[float] = []
    for i, test in enumerate(test_sets):
        if not test:
            if skip_empty:
                results.append(float("nan"))
                continue
            raise UndefinedAccuracyError(f"test set {i} is empty")
        if adaptation is None or buffer is None:
            predictions = learner.predict(test)
        else:
            predictions = np.array(
                [local_adapt(learner, buffer, example, adaptation, memory_features) for example in test]
            )
        labels = np.array([example.class_id for example in test])
        results.append(float(np.mean(predictions == labels)))
    return results


def memory_feature_matrix(learner: LearnerInterface, buffer: MemoryBuffer) -> np.ndarray:
    """Feature rows of every memory entry, in slot order."""
    entries = buffer.entries()
    cached = stack_features(entries)
    if cached is not None and cached.shape[1] == learner.dim:
        return cached
    return learner.features([e.example for e in entries])


def local_adapt(
    learner: LearnerInterface,
    buffer: MemoryBuffer,
    test_example: Example,
    params: LocalAdaptationParams,
    memory_features: np.ndarray | None = None,
) -> int:
    """Predict one example with a copy of the learner tuned on its memory neighbours.

    The K entries nearest to the example (Euclidean distance on learner
    features, ties to the earlier slot) are retrieved, then ``steps`` gradient
    steps are taken on their mean cross-entropy plus ``reg * ||theta - theta_base||^2``.
    The regularizer is applied as a proximal step, which stays stable for very
    large ``reg``. The base learner is never modified.

    Args:
        learner: Base learner
        buffer: Non-empty memory
        test_example: Example to predict
        params: Neighbour count, steps, regularization and step size
        memory_features: Precomputed feature rows of the memory, in slot order

    Returns:
        Predicted global class id

    Raises:
        EmptyMemoryError: If the memory is empty
    """
    if buffer.is_empty:
        raise EmptyMemoryError("local adaptation needs a non-empty memory")
    if params.steps == 0:
        return int(learner.predict([test_example])[0])

    if memory_features is None:
        memory_features = memory_feature_matrix(learner, buffer)
    query = learner.features([test_example])[0]
    distances = np.linalg.norm(memory_features - query, axis=1)
    k = min(params.k, len(buffer))
    nearest = np.argsort(distances, kind="stable")[:k]
    neighbours = [buffer.get(buffer.ordinal_at(int(i))).example for i in nearest]

    adapted = learner.clone()
    base = learner.parameters()
    theta = adapted.parameters()
    lr, reg = params.adapt_lr, params.reg
    shrink = 1.0 + 2.0 * lr * reg
    for _ in range(params.steps):
        grads = adapted.gradients(neighbours)
        theta = [(p - lr * g + 2.0 * lr * reg * b) / shrink for p, g, b in zip(theta, grads, base, strict=True)]
        adapted.set_parameters(theta)
    return int(adapted.predict([test_example])[0])
