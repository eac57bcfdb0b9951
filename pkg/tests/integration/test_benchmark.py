"""Harness-level reproductions on the shipped synthetic benchmark.

These run hundreds of experiments and are deselected by default; use
``pytest -m slow`` to run them.
"""

from collections.abc import Callable, Sequence
from dataclasses import replace
from pathlib import Path
from typing import Self

import numpy as np
import pytest
from scipy.stats import binom, chisquare

from replaymem.config import ExperimentConfig, load_config
from replaymem.data import SyntheticSpec, generate_synthetic, load_tasks
from replaymem.learner import LearnerInterface
from replaymem.memory import MemoryBuffer
from replaymem.metrics import runtime_ordering_holds, usage_vs_forgetting
from replaymem.models import Example, ExperimentRecord, TaskDataset
from replaymem.policies import ReservoirPolicy
from replaymem.trainer import run_experiment

pytestmark = pytest.mark.slow

SEEDS = range(5)


class ConstantLearner(LearnerInterface):
    """Learner stand-in that only counts updates."""

    def __init__(self, n_classes: int) -> None:
        self.n_classes = n_classes
        self.dim = 1
        self.updates = 0

    def predict_proba(self, batch: Sequence[Example]) -> np.ndarray:
        return np.full((len(batch), self.n_classes), 1.0 / self.n_classes)

    def loss(self, batch: Sequence[Example]) -> tuple[np.ndarray, float]:
        return np.ones(len(batch)), 1.0

    def features(self, batch: Sequence[Example]) -> np.ndarray:
        return np.zeros((len(batch), 1))

    def train_step(self, batch: Sequence[Example]) -> float:
        self.updates += 1
        return 1.0

    def gradients(self, batch: Sequence[Example]) -> list[np.ndarray]:
        return [np.zeros(1)]

    def parameters(self) -> list[np.ndarray]:
        return [np.zeros(1)]

    def set_parameters(self, params: Sequence[np.ndarray]) -> None:
        pass

    def clone(self) -> Self:
        return type(self)(self.n_classes)


def test_reservoir_inclusion_is_uniform(make_examples: Callable[..., list[Example]]) -> None:
    n, capacity, seeds = 10_000, 500, 200
    stream = make_examples(n)
    counts = np.zeros(n, dtype=np.int64)
    for seed in range(seeds):
        buffer = MemoryBuffer(capacity)
        policy = ReservoirPolicy()
        rng = np.random.default_rng(seed)
        for start in range(0, n, 32):
            policy.observe_batch(buffer, stream[start : start + 32], rng=rng)
        for example in buffer.examples():
            counts[example.stream_id] += 1

    p = capacity / n
    sigma = np.sqrt(seeds * p * (1 - p))
    deviations = np.abs(counts - seeds * p) / sigma
    # 10^4 positions: about 0.3% land beyond 3 sigma by chance alone
    assert np.mean(deviations > 3) < 0.01
    # exact two-sided binomial tail per position, Bonferroni-corrected over the stream
    upper = binom.sf(counts - 1, seeds, p)
    lower = binom.cdf(counts, seeds, p)
    tail = np.minimum(1.0, 2 * np.minimum(upper, lower))
    assert tail.min() > 1e-3 / n
    assert chisquare(counts).pvalue > 1e-3


def test_replay_accounting_on_a_long_stream(make_examples: Callable[..., list[Example]]) -> None:
    stream = make_examples(320_000)
    task = TaskDataset(name="long", task_id=0, class_count=1, class_offset=0, train=stream, test=stream[:10])
    config = ExperimentConfig(replay_every=100, batch_size=32, capacity_fraction=0.01)
    config.validate()
    learner = ConstantLearner(n_classes=1)
    record = run_experiment(config, [task], learner=learner)
    assert record.counters.train_batches == 10_000
    assert record.counters.replay_steps == 100
    assert record.counters.replayed_examples / record.counters.new_examples == pytest.approx(0.01)
    assert learner.updates == 10_100
    assert len(record.counters.ledger) == 320_000
    assert set(record.counters.ledger.values()) == {1}


@pytest.fixture(scope="module")
def benchmark_run(tmp_path_factory: pytest.TempPathFactory) -> Callable[[str, float, int], ExperimentRecord]:
    """Cached runs on the default five-task drifted stream, keyed by (policy, capacity, seed)."""
    out: Path = tmp_path_factory.mktemp("benchmark")
    generate_synthetic(SyntheticSpec(), out)
    base = load_config(out / "experiment.json")
    tasks = load_tasks(base.manifests)
    cache: dict[tuple[str, float, int], ExperimentRecord] = {}

    def run(policy: str, capacity: float, seed: int) -> ExperimentRecord:
        key = (policy, capacity, seed)
        if key not in cache:
            config = replace(base, policy=replace(base.policy, name=policy), capacity_fraction=capacity, seed=seed)
            config.validate()
            cache[key] = run_experiment(config, tasks)
        return cache[key]

    return run


def _mean_accuracy(run: Callable[[str, float, int], ExperimentRecord], policy: str, capacity: float) -> float:
    return float(np.mean([run(policy, capacity, seed).final_average_accuracy() for seed in SEEDS]))


def test_score_policies_favour_late_tasks(benchmark_run: Callable[[str, float, int], ExperimentRecord]) -> None:
    for policy in ("surprise", "max_loss"):
        late = 0
        negative = 0
        for seed in SEEDS:
            record = benchmark_run(policy, 0.1, seed)
            raw = record.composition[-1].raw
            shares = [raw[t.task_id] for t in record.tasks]
            late += sum(shares[-2:]) > sum(shares[:2])
            spearman = usage_vs_forgetting(record).spearman
            negative += spearman is not None and spearman < 0
        assert late >= 4, policy
        assert negative >= 4, policy


def test_reservoir_composition_is_near_uniform(
    benchmark_run: Callable[[str, float, int], ExperimentRecord],
) -> None:
    balanced = 0
    for seed in SEEDS:
        record = benchmark_run("reservoir", 0.1, seed)
        raw = record.composition[-1].raw
        uniform = 1 / len(record.tasks)
        balanced += all(abs(raw[t.task_id] - uniform) <= 0.10 for t in record.tasks)
    assert balanced >= 4


def test_uniform_policies_beat_score_policies(
    benchmark_run: Callable[[str, float, int], ExperimentRecord],
) -> None:
    uniform = min(_mean_accuracy(benchmark_run, p, 0.1) for p in ("reservoir", "naive_random"))
    scored = max(_mean_accuracy(benchmark_run, p, 0.1) for p in ("surprise", "max_loss", "mof"))
    assert uniform > scored


def test_larger_memory_helps_score_policies(benchmark_run: Callable[[str, float, int], ExperimentRecord]) -> None:
    for policy in ("surprise", "max_loss", "mof"):
        gain = _mean_accuracy(benchmark_run, policy, 0.5) - _mean_accuracy(benchmark_run, policy, 0.1)
        assert gain >= 0.02, policy
    reservoir = [_mean_accuracy(benchmark_run, "reservoir", c) for c in (0.1, 0.3, 0.5, 0.7)]
    assert max(reservoir) - min(reservoir) < 0.05


def test_mof_is_not_faster(benchmark_run: Callable[[str, float, int], ExperimentRecord]) -> None:
    records = [benchmark_run(p, 0.1, seed) for p in ("mof", "naive_random", "reservoir", "max_loss") for seed in SEEDS]
    assert runtime_ordering_holds(records, floor=1.0)
