"""Minimum Margin: keep the examples the model is least sure about."""

from collections.abc import Sequence
from dataclasses import dataclass
from typing import cast

import numpy as np

from replaymem.base_policy import BasePolicy
from replaymem.errors import ConfigurationError
from replaymem.memory import MemoryBuffer
from replaymem.models import Example, MemoryEntry, ModelFeedback
from replaymem.policies.scored import ScoreHeap


@dataclass
class MinMarginState:
    n_seen: int = 0


def margins(probs: np.ndarray, true_classes: Sequence[int]) -> np.ndarray:
    """``p_true - max_{c != true} p_c`` per row; negative when misclassified."""
    probs = np.asarray(probs, dtype=np.float64)
    rows = np.arange(probs.shape[0])
    true = np.asarray(true_classes, dtype=np.intp)
    p_true = probs[rows, true]
    if probs.shape[1] == 1:
        return p_true.copy()
    others = probs.copy()
    others[rows, true] = -np.inf
    return p_true - others.max(axis=1)


class MinMarginPolicy(BasePolicy):
    """Scores each example by its margin and evicts the maximum-margin entry.

    A newcomer replaces the stored maximum only when its margin is strictly
    smaller.
    """

    name = "min_margin"
    requires_feedback = True

    def __init__(self) -> None:
        super().__init__()
        self.state = MinMarginState()
        self._heap = ScoreHeap("max")

    def max_score(self, buffer: MemoryBuffer) -> float | None:
        top = self._heap.peek(buffer)
        return None if top is None else top[0]

    def _observe(
        self,
        buffer: MemoryBuffer,
        batch: Sequence[Example],
        feedback: ModelFeedback | None,
        rng: np.random.Generator | None,
    ) -> None:
        feedback = cast(ModelFeedback, feedback)
        if any(e.class_id is None for e in batch):
            raise ConfigurationError("min_margin needs class labels on every example")
        scores = margins(feedback.probs, [e.class_id for e in batch])
        self.state.n_seen += len(batch)

        for example, margin in zip(batch, scores, strict=True):
            score = float(margin)
            if buffer.is_full:
                top = self._heap.peek(buffer)
                if top is None or score >= top[0]:
                    continue
                self._heap.pop(buffer)
                buffer.evict(top[1])
            receipt = buffer.insert(MemoryEntry(example=example, score=score))
            self._heap.push(score, receipt.ordinal)
        self._heap.compact(buffer)
