from replaymem.__about__ import __version__
from replaymem.base_policy import BasePolicy
from replaymem.config import (
    ExperimentConfig,
    LearnerParams,
    LocalAdaptationParams,
    PolicyParams,
    config_from_dict,
    config_to_dict,
    dump_config,
    load_config,
)
from replaymem.data import SyntheticSpec, generate_synthetic, load_corpus, load_tasks
from replaymem.errors import (
    BufferFullError,
    ConfigurationError,
    CorpusError,
    EmptyMemoryError,
    FeatureDimensionError,
    MemoryIndexError,
    ReplayMemError,
    UndefinedAccuracyError,
)
from replaymem.learner import HashedBowLearner, LearnerInterface
from replaymem.memory import MemoryBuffer, composition, new_buffer
from replaymem.metrics import forgetting, runtime_ordering_holds, summarize, usage_vs_forgetting
from replaymem.models import (
    CompositionReport,
    Example,
    ExperimentRecord,
    ForgettingRecord,
    MemoryEntry,
    ModelFeedback,
    RunOutcome,
    SummaryRow,
    TaskDataset,
    TaskManifest,
    UsageForgetting,
    WriteReceipt,
)
from replaymem.policies import POLICY_NAMES, build_policy
from replaymem.trainer import evaluate, local_adapt, run_experiment

__all__ = [
    "__version__",
    "new_buffer",
    "composition",
    "build_policy",
    "run_experiment",
    "evaluate",
    "local_adapt",
    "forgetting",
    "summarize",
    "usage_vs_forgetting",
    "runtime_ordering_holds",
    "load_corpus",
    "load_tasks",
    "generate_synthetic",
    "load_config",
    "dump_config",
    "config_from_dict",
    "config_to_dict",
    "POLICY_NAMES",
    "BasePolicy",
    "MemoryBuffer",
    "LearnerInterface",
    "HashedBowLearner",
    "ExperimentConfig",
    "LearnerParams",
    "LocalAdaptationParams",
    "PolicyParams",
    "SyntheticSpec",
    "CompositionReport",
    "Example",
    "ExperimentRecord",
    "ForgettingRecord",
    "MemoryEntry",
    "ModelFeedback",
    "RunOutcome",
    "SummaryRow",
    "TaskDataset",
    "TaskManifest",
    "UsageForgetting",
    "WriteReceipt",
    "ReplayMemError",
    "ConfigurationError",
    "CorpusError",
    "BufferFullError",
    "EmptyMemoryError",
    "MemoryIndexError",
    "FeatureDimensionError",
    "UndefinedAccuracyError",
]
