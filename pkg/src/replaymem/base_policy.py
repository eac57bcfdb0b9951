"""Base classes for memory population policies.

Every policy owns its bookkeeping (``state``) and mutates a ``MemoryBuffer``
through ``observe_batch``; the buffer itself never decides what to keep.
"""

from abc import ABC, abstractmethod
from collections.abc import Sequence
import contextlib
from typing import Any, ClassVar, Literal

import numpy as np

from replaymem.errors import ConfigurationError
from replaymem.memory import MemoryBuffer
from replaymem.models import Example, ModelFeedback

KeyMode = Literal["class", "task"]


class BasePolicy(ABC):
    """Abstract base class for all memory population policies.

    Attributes:
        name: Registry name of the policy
        requires_feedback: Whether ``observe_batch`` needs model feedback
        requires_features: Whether the feedback must include feature vectors
        state: Policy-specific bookkeeping
    """

    name: ClassVar[str] = "base"
    requires_feedback: ClassVar[bool] = False
    requires_features: ClassVar[bool] = False

    def __init__(self) -> None:
        self.state: Any = None
        self._logger: Any = None

    def _get_logger(self) -> Any:
        """Get lazily-initialized logger instance.

        Returns:
            Logger instance or None if unavailable
        """
        if self._logger is None:
            with contextlib.suppress(Exception):
                from replaymem.utils.logger import get_logger

                self._logger = get_logger()
        return self._logger

    def observe_batch(
        self,
        buffer: MemoryBuffer,
        batch: Sequence[Example],
        feedback: ModelFeedback | None = None,
        rng: np.random.Generator | None = None,
    ) -> None:
        """Offer one incoming batch to the memory.

        Args:
            buffer: Memory to populate
            batch: Incoming examples, in stream order
            feedback: Model outputs on ``batch`` before its gradient step
            rng: Generator for randomized policies

        Raises:
            ConfigurationError: If required feedback (or its features) is missing
        """
        if not batch:
            return
        if self.requires_feedback:
            if feedback is None:
                raise ConfigurationError(f"policy '{self.name}' needs model feedback")
            if self.requires_features and feedback.features is None:
                raise ConfigurationError(f"policy '{self.name}' needs feature vectors in its feedback")
        self._observe(buffer, batch, feedback, rng)

    @abstractmethod
    def _observe(
        self,
        buffer: MemoryBuffer,
        batch: Sequence[Example],
        feedback: ModelFeedback | None,
        rng: np.random.Generator | None,
    ) -> None:
        """Apply the policy's admission and eviction rule to a non-empty batch."""
        ...

    def __repr__(self) -> str:
        return f"{type(self).__name__}(state={self.state!r})"


class KeyedPolicy(BasePolicy):
    """Policy that groups the memory by class id, or by task id in task mode."""

    def __init__(self, key_mode: KeyMode = "class") -> None:
        super().__init__()
        if key_mode not in ("class", "task"):
            raise ConfigurationError(f"key_mode must be 'class' or 'task', got {key_mode!r}")
        self.key_mode: KeyMode = key_mode

    def key_of(self, example: Example) -> int:
        if self.key_mode == "task":
            return example.task_id
        if example.class_id is None:
            raise ConfigurationError(
                f"policy '{self.name}' in class mode got example {example.stream_id} without a class id"
            )
        return example.class_id


def require_rng(rng: np.random.Generator | None, policy: str) -> np.random.Generator:
    if rng is None:
        raise ConfigurationError(f"policy '{policy}' needs a random generator")
    return rng
