"""Corpus ingestion and synthetic stream generation.

A corpus is a JSONL file with one object per line: ``text`` (string),
``label`` (local class index) and optionally ``split`` (``train``/``test``).
"""

from collections.abc import Sequence
from dataclasses import asdict, dataclass, field
import json
import math
from pathlib import Path
import re
from typing import Any

import numpy as np
from sklearn.utils import murmurhash3_32

from replaymem.config import QUESTION_ANSWERING_ORDERS, TEXT_CLASSIFICATION_ORDERS
from replaymem.errors import ConfigurationError, CorpusError
from replaymem.models import Example, TaskDataset, TaskManifest
from replaymem.utils.logger import get_logger
from replaymem.utils.rng import task_generator

_WORD = re.compile(r"\w+")
_TOKEN_MASK = 0x7FFFFFFF
SPLITS = ("train", "test")

# A desk-scale stream has ~300 batches instead of ~18000, so the generated
# experiment replays more often to keep roughly the same number of replay steps.
BENCHMARK_REPLAY_EVERY = 3
BENCHMARK_DIM = 2**12
BENCHMARK_LEARNING_RATE = 0.05


def tokenize(text: str) -> tuple[int, ...]:
    """Lower-cased word tokens mapped to non-negative 31-bit ids."""
    return tuple(murmurhash3_32(word, seed=0, positive=True) & _TOKEN_MASK for word in _WORD.findall(text.lower()))


def load_corpus(
    manifest: TaskManifest,
    task_id: int,
    test_fraction: float = 0.1,
    split_seed: int = 0,
) -> TaskDataset:
    """Load one task's JSONL corpus into train and test examples.

    Lines carrying a ``split`` field go to that split. The remaining lines are
    split deterministically: a ``test_fraction`` share chosen by a generator
    seeded with ``(split_seed, task_id)`` goes to test, the rest keep file order.

    Args:
        manifest: Task manifest
        task_id: Stable id of the task within the run
        test_fraction: Test share for lines without an explicit split
        split_seed: Seed for the deterministic split

    Returns:
        TaskDataset with global class ids (local label + class offset)

    Raises:
        CorpusError: On a missing file, malformed line, or out-of-range label
    """
    path = Path(manifest.path)
    if not path.is_file():
        raise CorpusError("corpus file not found", path=path)

    train: list[Example] = []
    test: list[Example] = []
    unsplit: list[Example] = []
    with path.open(encoding="utf-8") as f:
        for line_no, line in enumerate(f, start=1):
            if not line.strip():
                continue
            example, split = _parse_line(line, line_no, path, manifest, task_id)
            match split:
                case "train":
                    train.append(example)
                case "test":
                    test.append(example)
                case _:
                    unsplit.append(example)

    if unsplit:
        n_test = math.floor(test_fraction * len(unsplit) + 0.5)
        rng = task_generator(split_seed, task_id)
        test_idx = set(rng.permutation(len(unsplit))[:n_test].tolist())
        for i, example in enumerate(unsplit):
            (test if i in test_idx else train).append(example)

    logger = get_logger()
    logger.debug(f"loaded {manifest.name}: {len(train)} train / {len(test)} test from {path}")
    return TaskDataset(
        name=manifest.name,
        task_id=task_id,
        class_count=manifest.class_count,
        class_offset=manifest.class_offset,
        train=train,
        test=test,
        shared_label_group=manifest.shared_label_group,
    )


def _parse_line(
    line: str, line_no: int, path: Path, manifest: TaskManifest, task_id: int
) -> tuple[Example, str | None]:
    try:
        record = json.loads(line)
    except json.JSONDecodeError as e:
        raise CorpusError(f"malformed JSON ({e.msg})", path=path, line=line_no) from e
    if not isinstance(record, dict):
        raise CorpusError("line is not a JSON object", path=path, line=line_no)
    if "text" not in record or not isinstance(record["text"], str):
        raise CorpusError("missing string field 'text'", path=path, line=line_no)
    if "label" not in record:
        raise CorpusError("missing field 'label'", path=path, line=line_no)
    label = record["label"]
    if isinstance(label, bool) or not isinstance(label, int):
        raise CorpusError(f"label {label!r} is not an integer", path=path, line=line_no)
    if not 0 <= label < manifest.class_count:
        raise CorpusError(f"label {label} outside [0, {manifest.class_count})", path=path, line=line_no)
    split = record.get("split")
    if split is not None and split not in SPLITS:
        raise CorpusError(f"split must be one of {SPLITS}, got {split!r}", path=path, line=line_no)

    text = record["text"]
    example = Example(
        stream_id=line_no,
        task_id=task_id,
        class_id=manifest.class_offset + label,
        tokens=tokenize(text),
        text=text,
    )
    return example, split


def load_tasks(
    manifests: Sequence[TaskManifest], test_fraction: float = 0.1, split_seed: int = 0
) -> list[TaskDataset]:
    """Load every manifest; task ids follow the manifest order."""
    return [
        load_corpus(m, task_id=i, test_fraction=test_fraction, split_seed=split_seed) for i, m in enumerate(manifests)
    ]


@dataclass
class SyntheticSpec:
    """Recipe for a class-conditional bag-of-tokens task stream.

    Each global class owns a block of ``class_block_size`` tokens; all tasks
    share one noise block. A token is drawn from the example's class block with
    probability ``alpha`` (per task, see ``task_alpha``), else from the noise
    block. With ``drift`` on, the class signal weakens linearly along the stream
    ``order`` down to ``alpha * (1 - drift_decay)`` for the last task streamed,
    so later tasks are harder and carry higher loss and entropy.

    ``order`` names one of the preset orders for ``n_tasks`` and is also the
    order the generated experiment runs. The default ``ii`` streams the two
    sentiment tasks, which share one label range, last.

    ``key_mode`` is written into the generated experiment config for the
    grouping policies; class-free style streams use ``task``.
    """

    vocab_size: int = 4096
    n_tasks: int = 5
    classes_per_task: list[int] = field(default_factory=lambda: [5, 4, 14, 5, 10])
    examples_per_task: int = 2000
    test_per_task: int = 200
    tokens_per_example: int = 24
    alpha: float = 0.45
    drift: bool = True
    drift_decay: float = 0.6
    class_block_size: int = 24
    noise_block_size: int = 512
    shared_label_groups: list[list[int]] = field(default_factory=lambda: [[0, 3]])
    task_names: list[str] | None = None
    key_mode: str = "class"
    order: str = "ii"
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SyntheticSpec":
        try:
            spec = cls(**data)
        except TypeError as e:
            raise ConfigurationError(f"malformed synthetic spec: {e}") from e
        spec.validate()
        return spec

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @property
    def names(self) -> list[str]:
        return list(self.task_names) if self.task_names else [f"task{t}" for t in range(self.n_tasks)]

    def presets(self) -> dict[str, tuple[int, ...]]:
        presets = {5: TEXT_CLASSIFICATION_ORDERS, 4: QUESTION_ANSWERING_ORDERS}.get(self.n_tasks)
        if presets is None:
            return {"i": tuple(range(self.n_tasks)), "ii": tuple(reversed(range(self.n_tasks)))}
        return dict(presets)

    def stream_position(self, task: int) -> int:
        return self.presets()[self.order].index(task)

    def task_alpha(self, task: int) -> float:
        """Class-token probability of ``task``, decaying with its position in ``order``."""
        if not self.drift or self.n_tasks == 1:
            return self.alpha
        return self.alpha * (1.0 - self.drift_decay * self.stream_position(task) / (self.n_tasks - 1))

    def class_offsets(self) -> list[int]:
        """Global label offset per task; tasks in one shared group reuse the first member's range."""
        leader_of = {t: min(g) for g in self.shared_label_groups for t in g}
        offsets: list[int] = []
        next_offset = 0
        for t in range(self.n_tasks):
            leader = leader_of.get(t, t)
            if leader != t:
                offsets.append(offsets[leader])
                continue
            offsets.append(next_offset)
            next_offset += self.classes_per_task[t]
        return offsets

    def total_classes(self) -> int:
        offsets = self.class_offsets()
        return max(o + c for o, c in zip(offsets, self.classes_per_task, strict=True))

    def validate(self) -> None:
        if self.n_tasks < 1:
            raise ConfigurationError("n_tasks must be >= 1")
        if len(self.classes_per_task) != self.n_tasks or min(self.classes_per_task) < 1:
            raise ConfigurationError("classes_per_task needs one positive entry per task")
        if self.task_names is not None and len(set(self.task_names)) != self.n_tasks:
            raise ConfigurationError("task_names needs one unique name per task")
        if self.key_mode not in ("class", "task"):
            raise ConfigurationError(f"key_mode must be 'class' or 'task', got {self.key_mode!r}")
        if self.order not in self.presets():
            raise ConfigurationError(f"order {self.order!r} is not one of {sorted(self.presets())}")
        if self.examples_per_task < 1 or self.test_per_task < 0 or self.tokens_per_example < 1:
            raise ConfigurationError("examples_per_task and tokens_per_example must be >= 1, test_per_task >= 0")
        if not 0.0 <= self.alpha <= 1.0 or not 0.0 <= self.drift_decay <= 1.0:
            raise ConfigurationError("alpha and drift_decay must be in [0, 1]")
        if self.class_block_size < 1 or self.noise_block_size < 1:
            raise ConfigurationError("class_block_size and noise_block_size must be >= 1")
        for group in self.shared_label_groups:
            if any(not 0 <= t < self.n_tasks for t in group) or len(set(group)) != len(group):
                raise ConfigurationError(f"shared label group {group} references unknown tasks")
            if len({self.classes_per_task[t] for t in group}) > 1:
                raise ConfigurationError(f"tasks in shared label group {group} need equal class counts")
        seen = [t for g in self.shared_label_groups for t in g]
        if len(seen) != len(set(seen)):
            raise ConfigurationError("a task can belong to at most one shared label group")
        needed = self.total_classes() * self.class_block_size + self.noise_block_size
        if self.vocab_size < needed:
            raise ConfigurationError(
                f"vocab_size {self.vocab_size} too small: {self.total_classes()} class blocks of "
                f"{self.class_block_size} plus a noise block of {self.noise_block_size} need {needed}"
            )


def _task_tokens(
    spec: SyntheticSpec, rng: np.random.Generator, labels: np.ndarray, alpha: float
) -> np.ndarray:
    n, length = len(labels), spec.tokens_per_example
    noise_start = spec.total_classes() * spec.class_block_size
    from_class = rng.random((n, length)) < alpha
    class_tokens = labels[:, None] * spec.class_block_size + rng.integers(spec.class_block_size, size=(n, length))
    noise_tokens = noise_start + rng.integers(spec.noise_block_size, size=(n, length))
    return np.where(from_class, class_tokens, noise_tokens)


def generate_synthetic(spec: SyntheticSpec, out_dir: str | Path) -> list[TaskManifest]:
    """Write one JSONL corpus per task plus ``manifests.json``, ``orders.json`` and ``experiment.json``.

    Output is byte-identical for identical specs.

    Returns:
        The manifests written, with paths relative to ``out_dir``
    """
    spec.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(spec.seed)
    offsets = spec.class_offsets()
    group_label = {t: "+".join(spec.names[m] for m in g) for g in spec.shared_label_groups for t in g}

    manifests: list[TaskManifest] = []
    for t, name in enumerate(spec.names):
        n_classes = spec.classes_per_task[t]
        total = spec.examples_per_task + spec.test_per_task
        local = rng.permutation(np.resize(np.arange(n_classes), total))
        tokens = _task_tokens(spec, rng, offsets[t] + local, spec.task_alpha(t))
        lines = []
        for i in range(total):
            record = {
                "label": int(local[i]),
                "split": "train" if i < spec.examples_per_task else "test",
                "text": " ".join(f"w{tok}" for tok in tokens[i]),
            }
            lines.append(json.dumps(record, sort_keys=True, separators=(",", ":")))
        filename = f"{name}.jsonl"
        (out / filename).write_text("\n".join(lines) + "\n", encoding="utf-8")
        manifests.append(
            TaskManifest(
                name=name,
                path=filename,
                class_count=n_classes,
                class_offset=offsets[t],
                shared_label_group=group_label.get(t),
            )
        )

    orders = {label: [spec.names[i] for i in perm] for label, perm in spec.presets().items()}

    _write_json(out / "manifests.json", [m.to_dict() for m in manifests])
    _write_json(out / "orders.json", orders)
    _write_json(
        out / "experiment.json",
        {
            "name": "synthetic",
            "manifests": "manifests.json",
            "orders": "orders.json",
            "order": spec.order,
            "seed": spec.seed,
            "replay_every": BENCHMARK_REPLAY_EVERY,
            "learner": {"dim": BENCHMARK_DIM, "learning_rate": BENCHMARK_LEARNING_RATE},
            "policy": {"name": "reservoir", "key_mode": spec.key_mode},
        },
    )
    _write_json(out / "synthetic_spec.json", spec.to_dict())
    get_logger().info(f"wrote {len(manifests)} synthetic tasks to {out}")
    return manifests


def _write_json(path: Path, payload: Any) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
