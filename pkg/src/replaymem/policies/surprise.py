"""Surprise: keep batches whose mean predictive entropy jumped the most."""

from collections.abc import Sequence
from dataclasses import dataclass
from typing import cast

import numpy as np
from scipy.special import entr

from replaymem.base_policy import BasePolicy
from replaymem.memory import MemoryBuffer
from replaymem.models import Example, MemoryEntry, ModelFeedback
from replaymem.policies.scored import ScoreHeap


@dataclass
class SurpriseState:
    prev_entropy: float = 0.0
    last_surprise: float = 0.0
    n_batches: int = 0


def batch_entropy(probs: np.ndarray) -> float:
    """Mean over rows of the Shannon entropy in nats (0 ln 0 = 0)."""
    return float(entr(np.asarray(probs, dtype=np.float64)).sum(axis=1).mean())


class SurprisePolicy(BasePolicy):
    """Scores every example of a batch with ``H_t - H_{t-1}``.

    The entropy signal runs across task boundaries without reset and starts from
    ``H_0 = 0``. Once the memory is full, each example replaces the current
    minimum-score entry only if its score is strictly higher.
    """

    name = "surprise"
    requires_feedback = True

    def __init__(self) -> None:
        super().__init__()
        self.state = SurpriseState()
        self._heap = ScoreHeap("min")

    def min_score(self, buffer: MemoryBuffer) -> float | None:
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
        state = self.state
        entropy = batch_entropy(feedback.probs)
        surprise = entropy - state.prev_entropy
        state.prev_entropy = entropy
        state.last_surprise = surprise
        state.n_batches += 1

        for example in batch:
            if buffer.is_full:
                top = self._heap.peek(buffer)
                if top is None or surprise <= top[0]:
                    # every remaining example carries the same score
                    break
                self._heap.pop(buffer)
                buffer.evict(top[1])
            receipt = buffer.insert(MemoryEntry(example=example, score=surprise))
            self._heap.push(surprise, receipt.ordinal)
        self._heap.compact(buffer)
