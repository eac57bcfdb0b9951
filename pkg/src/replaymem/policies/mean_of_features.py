"""Mean of Features: keep the examples closest to their key's mean feature vector."""

from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import cast

import numpy as np

from replaymem.base_policy import KeyedPolicy, KeyMode
from replaymem.errors import FeatureDimensionError
from replaymem.memory import MemoryBuffer
from replaymem.models import Example, MemoryEntry, ModelFeedback


@dataclass
class MeanOfFeaturesState:
    """Per-key member ordinals, their feature rows (same order) and the mean."""

    dim: int | None = None
    members: dict[int, list[int]] = field(default_factory=dict)
    features: dict[int, np.ndarray] = field(default_factory=dict)
    means: dict[int, np.ndarray] = field(default_factory=dict)
    n_seen: int = 0
    n_rejected: int = 0


class MeanOfFeaturesPolicy(KeyedPolicy):
    """Per-key feature means with farthest-member replacement.

    With a full memory, an example of a known key replaces that key's member
    farthest (Euclidean) from the key mean if the newcomer is strictly closer.
    An example of a key with no members evicts the farthest member of the most
    populated key instead. Means are recomputed exactly from the members after
    every change.
    """

    name = "mof"
    requires_feedback = True
    requires_features = True

    def __init__(self, key_mode: KeyMode = "class") -> None:
        super().__init__(key_mode)
        self.state = MeanOfFeaturesState()

    def member_features(self, key: int) -> np.ndarray:
        return self.state.features[key]

    def _recompute(self, key: int) -> None:
        state = self.state
        if state.members.get(key):
            state.means[key] = state.features[key].mean(axis=0)
        else:
            state.members.pop(key, None)
            state.features.pop(key, None)
            state.means.pop(key, None)

    def _farthest(self, key: int) -> tuple[int, float]:
        distances = np.linalg.norm(self.state.features[key] - self.state.means[key], axis=1)
        j = int(np.argmax(distances))
        return j, float(distances[j])

    def _remove(self, buffer: MemoryBuffer, key: int, row: int) -> None:
        state = self.state
        buffer.evict(state.members[key].pop(row))
        state.features[key] = np.delete(state.features[key], row, axis=0)
        self._recompute(key)

    def _add(self, buffer: MemoryBuffer, key: int, example: Example, feature: np.ndarray) -> None:
        state = self.state
        receipt = buffer.insert(MemoryEntry(example=example, features=feature))
        if key in state.members:
            state.members[key].append(receipt.ordinal)
            state.features[key] = np.vstack([state.features[key], feature])
        else:
            state.members[key] = [receipt.ordinal]
            state.features[key] = feature[None, :].copy()
        self._recompute(key)

    def _most_populated_key(self) -> int:
        # ties resolve to the key discovered first
        return max(self.state.members, key=lambda k: len(self.state.members[k]))

    def _observe(
        self,
        buffer: MemoryBuffer,
        batch: Sequence[Example],
        feedback: ModelFeedback | None,
        rng: np.random.Generator | None,
    ) -> None:
        features = np.asarray(cast(ModelFeedback, feedback).features, dtype=np.float64)
        state = self.state
        if features.ndim != 2 or features.shape[0] != len(batch):
            raise FeatureDimensionError(f"expected {len(batch)} feature rows, got shape {features.shape}")
        if state.dim is None:
            state.dim = features.shape[1]
        elif features.shape[1] != state.dim:
            raise FeatureDimensionError(f"feature dimension {features.shape[1]} != {state.dim}")

        for example, row in zip(batch, features, strict=True):
            state.n_seen += 1
            key = self.key_of(example)
            feature = row.copy()
            if not buffer.is_full:
                self._add(buffer, key, example, feature)
            elif state.members.get(key):
                victim, farthest = self._farthest(key)
                if np.linalg.norm(feature - state.means[key]) < farthest:
                    self._remove(buffer, key, victim)
                    self._add(buffer, key, example, feature)
                else:
                    state.n_rejected += 1
            else:
                donor = self._most_populated_key()
                victim, _ = self._farthest(donor)
                self._remove(buffer, donor, victim)
                self._add(buffer, key, example, feature)
