"""Experiment configuration.

A config is one JSON object. Every field has an explicit default and
``config_to_dict`` writes all of them, so a serialized config fully describes
a run and parse -> serialize -> parse is the identity.
"""

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field, fields, replace
import json
import os
from pathlib import Path
from typing import Any

from replaymem.errors import ConfigurationError
from replaymem.models import TaskManifest
from replaymem.policies import POLICY_NAMES

# Positions refer to the manifest list. Text classification mirrors the five-task
# setup (0 yelp, 1 agnews, 2 dbpedia, 3 amazon, 4 yahoo); question answering the
# four-task one (0 quac, 1 trivia-web, 2 trivia-wiki, 3 squad).
TEXT_CLASSIFICATION_ORDERS: dict[str, tuple[int, ...]] = {
    "i": (0, 1, 2, 3, 4),
    "ii": (2, 4, 1, 3, 0),
    "iii": (0, 4, 3, 2, 1),
    "iv": (1, 0, 3, 4, 2),
}
QUESTION_ANSWERING_ORDERS: dict[str, tuple[int, ...]] = {
    "i": (0, 1, 2, 3),
    "ii": (3, 2, 0, 1),
    "iii": (1, 2, 3, 0),
    "iv": (2, 0, 1, 3),
}

THREADS_ENV = "REPLAYMEM_THREADS"


@dataclass
class LearnerParams:
    dim: int = 2**15
    learning_rate: float = 1e-3
    hash_seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    alternate_sign: bool = False


@dataclass
class PolicyParams:
    name: str = "reservoir"
    key_mode: str = "class"
    store_probability: float | None = None


@dataclass
class LocalAdaptationParams:
    """Per-test-example fine-tuning on the K nearest memory entries."""

    k: int = 32
    steps: int = 10
    reg: float = 1e-3
    adapt_lr: float = 1e-2


@dataclass
class ExperimentConfig:
    """One run of the lifelong-learning harness.

    The stream order is ``task_order`` when given, else the named ``order``
    looked up in ``orders`` (or in the presets), else the manifest order.
    With ``shuffle_train`` each task's training examples are permuted by a
    generator keyed on ``(seed, task_id)``; otherwise file order is kept.
    """

    name: str = "experiment"
    manifests: list[TaskManifest] = field(default_factory=list)
    orders: dict[str, list[str]] = field(default_factory=dict)
    order: str | None = None
    task_order: list[str] | None = None
    capacity_fraction: float = 0.10
    replay_every: int = 100
    batch_size: int = 32
    test_fraction: float = 0.1
    shuffle_train: bool = True
    policy: PolicyParams = field(default_factory=PolicyParams)
    learner: LearnerParams = field(default_factory=LearnerParams)
    seed: int = 0
    local_adaptation: LocalAdaptationParams | None = None
    evaluate_local_adaptation: bool = False
    output_dir: str = "runs"

    @property
    def replay_ratio(self) -> float:
        return 1.0 / self.replay_every

    @property
    def order_label(self) -> str:
        if self.order is not None:
            return self.order
        return "custom" if self.task_order is not None else "manifest"

    def resolved_orders(self) -> dict[str, list[str]]:
        """Named orders: explicit ``orders`` or the presets matching the task count."""
        if self.orders:
            return {k: list(v) for k, v in self.orders.items()}
        names = [m.name for m in self.manifests]
        presets = {5: TEXT_CLASSIFICATION_ORDERS, 4: QUESTION_ANSWERING_ORDERS}.get(len(names), {})
        return {label: [names[i] for i in perm] for label, perm in presets.items()}

    def resolved_task_order(self) -> list[str]:
        names = [m.name for m in self.manifests]
        if self.task_order is not None:
            order = list(self.task_order)
        elif self.order is not None:
            orders = self.resolved_orders()
            if self.order not in orders:
                raise ConfigurationError(f"unknown task order {self.order!r}; known: {sorted(orders)}")
            order = orders[self.order]
        else:
            order = names
        if sorted(order) != sorted(names):
            raise ConfigurationError(f"task order {order} is not a permutation of the manifest tasks {names}")
        return order

    def validate(self) -> None:
        """Check ranges and cross-field consistency.

        Raises:
            ConfigurationError: On the first violated constraint
        """
        if not 0.0 < self.capacity_fraction <= 1.0:
            raise ConfigurationError(f"capacity_fraction must be in (0, 1], got {self.capacity_fraction}")
        if self.replay_every < 1:
            raise ConfigurationError(f"replay_every must be >= 1, got {self.replay_every}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0.0 <= self.test_fraction < 1.0:
            raise ConfigurationError(f"test_fraction must be in [0, 1), got {self.test_fraction}")
        if self.policy.name not in POLICY_NAMES:
            raise ConfigurationError(f"unknown policy {self.policy.name!r}; expected one of {', '.join(POLICY_NAMES)}")
        if self.policy.key_mode not in ("class", "task"):
            raise ConfigurationError(f"policy.key_mode must be 'class' or 'task', got {self.policy.key_mode!r}")
        if self.local_adaptation is not None:
            la = self.local_adaptation
            if la.k < 1 or la.steps < 0 or la.reg < 0 or la.adapt_lr <= 0:
                raise ConfigurationError(f"invalid local adaptation parameters: {la}")
        elif self.evaluate_local_adaptation:
            raise ConfigurationError("evaluate_local_adaptation needs a local_adaptation block")
        if len({m.name for m in self.manifests}) != len(self.manifests):
            raise ConfigurationError("task names in manifests must be unique")
        validate_label_ranges(self.manifests)
        if self.manifests:
            self.resolved_task_order()


def validate_label_ranges(manifests: Sequence[TaskManifest]) -> None:
    """Global label ranges must be disjoint unless two tasks share a label group."""
    for i, a in enumerate(manifests):
        if a.class_count < 1 or a.class_offset < 0:
            raise ConfigurationError(f"task {a.name!r}: class_count must be >= 1 and class_offset >= 0")
        for b in manifests[i + 1 :]:
            if a.shared_label_group is not None and a.shared_label_group == b.shared_label_group:
                continue
            a_end, b_end = a.class_offset + a.class_count, b.class_offset + b.class_count
            if a.class_offset < b_end and b.class_offset < a_end:
                raise ConfigurationError(f"label ranges of {a.name!r} and {b.name!r} overlap without a shared group")


def total_classes(manifests: Sequence[TaskManifest]) -> int:
    return max((m.class_offset + m.class_count for m in manifests), default=0)


def _build(cls: type, data: Mapping[str, Any], section: str) -> Any:
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigurationError(f"unknown keys in {section}: {sorted(unknown)}")
    return cls(**data)


def config_from_dict(data: Mapping[str, Any], base_dir: str | Path | None = None) -> ExperimentConfig:
    """Build a validated config from a parsed JSON object.

    ``manifests`` may be a list of manifest objects or a path (relative to
    ``base_dir``) to a JSON file holding that list; ``orders`` may likewise be a
    path to a JSON object of named orders.
    """
    if not isinstance(data, Mapping):
        raise ConfigurationError("config must be a JSON object")
    data = dict(data)
    base = Path(base_dir) if base_dir is not None else Path.cwd()
    try:
        manifests_raw = data.pop("manifests", [])
        if isinstance(manifests_raw, str):
            manifests_raw = _read_json(base / manifests_raw)
        manifests = [TaskManifest.from_dict(_resolve_path(m, base)) for m in manifests_raw]

        orders_raw = data.pop("orders", {})
        if isinstance(orders_raw, str):
            orders_raw = _read_json(base / orders_raw)

        policy = _build(PolicyParams, data.pop("policy", {}), "policy")
        learner = _build(LearnerParams, data.pop("learner", {}), "learner")
        la_raw = data.pop("local_adaptation", None)
        local_adaptation = None if la_raw is None else _build(LocalAdaptationParams, la_raw, "local_adaptation")
        config = _build(ExperimentConfig, data, "config")
    except (KeyError, TypeError) as e:
        raise ConfigurationError(f"malformed config: {e}") from e

    config = replace(
        config,
        manifests=manifests,
        orders={str(k): list(v) for k, v in orders_raw.items()},
        policy=policy,
        learner=learner,
        local_adaptation=local_adaptation,
    )
    config.validate()
    return config


def config_to_dict(config: ExperimentConfig) -> dict[str, Any]:
    """Serialize a config with every default spelled out."""
    return {
        "name": config.name,
        "manifests": [m.to_dict() for m in config.manifests],
        "orders": {k: list(v) for k, v in config.orders.items()},
        "order": config.order,
        "task_order": None if config.task_order is None else list(config.task_order),
        "capacity_fraction": config.capacity_fraction,
        "replay_every": config.replay_every,
        "batch_size": config.batch_size,
        "test_fraction": config.test_fraction,
        "shuffle_train": config.shuffle_train,
        "policy": {f.name: getattr(config.policy, f.name) for f in fields(PolicyParams)},
        "learner": {f.name: getattr(config.learner, f.name) for f in fields(LearnerParams)},
        "seed": config.seed,
        "local_adaptation": (
            None
            if config.local_adaptation is None
            else {f.name: getattr(config.local_adaptation, f.name) for f in fields(LocalAdaptationParams)}
        ),
        "evaluate_local_adaptation": config.evaluate_local_adaptation,
        "output_dir": config.output_dir,
    }


def load_config(path: str | Path) -> ExperimentConfig:
    """Read and validate a config file; relative paths inside resolve against its directory."""
    path = Path(path)
    return config_from_dict(_read_json(path), base_dir=path.parent)


def dump_config(config: ExperimentConfig, path: str | Path | None = None) -> str:
    text = json.dumps(config_to_dict(config), indent=2, sort_keys=False) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def sweep_threads(default: int | None = None) -> int:
    """Worker cap from REPLAYMEM_THREADS, else ``default`` or the CPU count."""
    raw = os.environ.get(THREADS_ENV)
    if raw:
        try:
            value = int(raw)
        except ValueError:
            raise ConfigurationError(f"{THREADS_ENV} must be an integer, got {raw!r}") from None
        if value < 1:
            raise ConfigurationError(f"{THREADS_ENV} must be >= 1, got {value}")
        return value
    return default or os.cpu_count() or 1


def _read_json(path: Path) -> Any:
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigurationError(f"{path}: invalid JSON ({e})") from e


def _resolve_path(manifest: Mapping[str, Any], base: Path) -> dict[str, Any]:
    data = dict(manifest)
    if "path" in data and not Path(data["path"]).is_absolute():
        data["path"] = str(base / data["path"])
    return data
