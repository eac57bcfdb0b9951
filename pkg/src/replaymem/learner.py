"""Online classifiers supplying probabilities, losses and features.

The harness only talks to ``LearnerInterface``. ``HashedBowLearner`` is the
reference implementation: multinomial logistic regression over L2-normalized
hashed token counts, trained with Adam on the mean cross-entropy.
"""

from abc import ABC, abstractmethod
from collections.abc import Sequence
from typing import Self

import numpy as np
from scipy import sparse
from scipy.special import log_softmax, softmax
from sklearn.utils import murmurhash3_32

from replaymem.errors import ConfigurationError
from replaymem.models import Example, ModelFeedback


class LearnerInterface(ABC):
    """Contract between the harness and a classifier.

    Attributes:
        n_classes: Size of the global label space
        dim: Feature dimension d
    """

    n_classes: int
    dim: int

    @abstractmethod
    def predict_proba(self, batch: Sequence[Example]) -> np.ndarray:
        """Row-stochastic ``(len(batch), n_classes)`` probability matrix."""
        ...

    @abstractmethod
    def loss(self, batch: Sequence[Example]) -> tuple[np.ndarray, float]:
        """Per-example cross-entropy ``-ln p_true`` and its mean."""
        ...

    @abstractmethod
    def features(self, batch: Sequence[Example]) -> np.ndarray:
        """Dense ``(len(batch), dim)`` feature matrix."""
        ...

    @abstractmethod
    def train_step(self, batch: Sequence[Example]) -> float:
        """One optimizer update on the batch mean cross-entropy; returns the pre-update loss."""
        ...

    @abstractmethod
    def gradients(self, batch: Sequence[Example]) -> list[np.ndarray]:
        """Gradient of the batch mean cross-entropy, aligned with ``parameters()``."""
        ...

    @abstractmethod
    def parameters(self) -> list[np.ndarray]:
        """Copies of the model parameters."""
        ...

    @abstractmethod
    def set_parameters(self, params: Sequence[np.ndarray]) -> None: ...

    @abstractmethod
    def clone(self) -> Self:
        """Independent copy of the parameters, without optimizer state."""
        ...

    def predict(self, batch: Sequence[Example]) -> np.ndarray:
        return np.argmax(self.predict_proba(batch), axis=1)

    def feedback(self, batch: Sequence[Example], with_features: bool = False) -> ModelFeedback:
        """Model outputs on an incoming batch, for the population policies."""
        per_example, mean = self.loss(batch)
        return ModelFeedback(
            probs=self.predict_proba(batch),
            per_example_loss=per_example,
            batch_mean_loss=mean,
            features=self.features(batch) if with_features else None,
        )


class HashedBowLearner(LearnerInterface):
    """Softmax regression over hashed bag-of-words features.

    Token ids are hashed into ``dim`` buckets with MurmurHash3 under
    ``hash_seed``; counts are L2-normalized per example (an empty token sequence
    maps to the zero vector). Weights start at zero, so the untrained model
    predicts the uniform distribution.
    """

    def __init__(
        self,
        n_classes: int,
        dim: int = 2**15,
        learning_rate: float = 1e-3,
        hash_seed: int = 0,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
        alternate_sign: bool = False,
    ) -> None:
        if n_classes < 1:
            raise ConfigurationError(f"n_classes must be >= 1, got {n_classes}")
        if dim < 1:
            raise ConfigurationError(f"dim must be >= 1, got {dim}")
        if learning_rate <= 0:
            raise ConfigurationError(f"learning_rate must be > 0, got {learning_rate}")
        self.n_classes = int(n_classes)
        self.dim = int(dim)
        self.learning_rate = float(learning_rate)
        self.hash_seed = int(hash_seed)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.alternate_sign = alternate_sign

        self.weights = np.zeros((self.n_classes, self.dim))
        self.bias = np.zeros(self.n_classes)
        self._m = [np.zeros_like(self.weights), np.zeros_like(self.bias)]
        self._v = [np.zeros_like(self.weights), np.zeros_like(self.bias)]
        self._t = 0

    def __repr__(self) -> str:
        return f"HashedBowLearner(n_classes={self.n_classes}, dim={self.dim}, lr={self.learning_rate})"

    def vectorize(self, batch: Sequence[Example]) -> sparse.csr_matrix:
        """Sparse ``(len(batch), dim)`` design matrix of normalized hashed counts."""
        indptr = [0]
        indices: list[np.ndarray] = []
        data: list[np.ndarray] = []
        for example in batch:
            if example.tokens:
                hashed = murmurhash3_32(np.asarray(example.tokens, dtype=np.int32), seed=self.hash_seed)
                hashed = np.asarray(hashed, dtype=np.int64)
                buckets = np.abs(hashed) % self.dim
                signs = np.where(hashed >= 0, 1.0, -1.0) if self.alternate_sign else np.ones(len(buckets))
                cols, inverse = np.unique(buckets, return_inverse=True)
                values = np.bincount(inverse, weights=signs, minlength=len(cols))
                norm = np.linalg.norm(values)
                if norm > 0:
                    values = values / norm
                indices.append(cols)
                data.append(values)
                indptr.append(indptr[-1] + len(cols))
            else:
                indptr.append(indptr[-1])
        return sparse.csr_matrix(
            (
                np.concatenate(data) if data else np.zeros(0),
                np.concatenate(indices) if indices else np.zeros(0, dtype=np.int64),
                np.asarray(indptr),
            ),
            shape=(len(batch), self.dim),
        )

    def _labels(self, batch: Sequence[Example]) -> np.ndarray:
        labels = np.empty(len(batch), dtype=np.intp)
        for i, example in enumerate(batch):
            if example.class_id is None or not 0 <= example.class_id < self.n_classes:
                raise ConfigurationError(
                    f"example {example.stream_id} has class id {example.class_id}, outside [0, {self.n_classes})"
                )
            labels[i] = example.class_id
        return labels

    def _logits(self, X: sparse.csr_matrix) -> np.ndarray:
        return np.asarray(X @ self.weights.T) + self.bias

    def predict_proba(self, batch: Sequence[Example]) -> np.ndarray:
        return softmax(self._logits(self.vectorize(batch)), axis=1)

    def loss(self, batch: Sequence[Example]) -> tuple[np.ndarray, float]:
        labels = self._labels(batch)
        log_probs = log_softmax(self._logits(self.vectorize(batch)), axis=1)
        per_example = -log_probs[np.arange(len(batch)), labels]
        return per_example, float(per_example.mean()) if len(batch) else 0.0

    def features(self, batch: Sequence[Example]) -> np.ndarray:
        return self.vectorize(batch).toarray()

    def feedback(self, batch: Sequence[Example], with_features: bool = False) -> ModelFeedback:
        X = self.vectorize(batch)
        labels = self._labels(batch)
        logits = self._logits(X)
        log_probs = log_softmax(logits, axis=1)
        per_example = -log_probs[np.arange(len(batch)), labels]
        return ModelFeedback(
            probs=np.exp(log_probs),
            per_example_loss=per_example,
            batch_mean_loss=float(per_example.mean()),
            features=X.toarray() if with_features else None,
        )

    def _gradients(self, X: sparse.csr_matrix, labels: np.ndarray) -> tuple[list[np.ndarray], float]:
        n = X.shape[0]
        log_probs = log_softmax(self._logits(X), axis=1)
        rows = np.arange(n)
        mean_loss = float(-log_probs[rows, labels].mean())
        residual = np.exp(log_probs)
        residual[rows, labels] -= 1.0
        residual /= n
        grad_w = np.asarray(X.T @ residual).T
        grad_b = residual.sum(axis=0)
        return [grad_w, grad_b], mean_loss

    def gradients(self, batch: Sequence[Example]) -> list[np.ndarray]:
        grads, _ = self._gradients(self.vectorize(batch), self._labels(batch))
        return grads

    def train_step(self, batch: Sequence[Example]) -> float:
        if not batch:
            raise ConfigurationError("train_step needs a non-empty batch")
        grads, mean_loss = self._gradients(self.vectorize(batch), self._labels(batch))
        self._t += 1
        correction1 = 1.0 - self.beta1**self._t
        correction2 = 1.0 - self.beta2**self._t
        for param, grad, m, v in zip((self.weights, self.bias), grads, self._m, self._v, strict=True):
            m *= self.beta1
            m += (1.0 - self.beta1) * grad
            v *= self.beta2
            v += (1.0 - self.beta2) * grad**2
            param -= self.learning_rate * (m / correction1) / (np.sqrt(v / correction2) + self.eps)
        return mean_loss

    def parameters(self) -> list[np.ndarray]:
        return [self.weights.copy(), self.bias.copy()]

    def set_parameters(self, params: Sequence[np.ndarray]) -> None:
        weights, bias = params
        if weights.shape != self.weights.shape or bias.shape != self.bias.shape:
            raise ConfigurationError("parameter shapes do not match the learner")
        self.weights = np.array(weights, dtype=np.float64)
        self.bias = np.array(bias, dtype=np.float64)

    def clone(self) -> Self:
        twin = type(self)(
            n_classes=self.n_classes,
            dim=self.dim,
            learning_rate=self.learning_rate,
            hash_seed=self.hash_seed,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            alternate_sign=self.alternate_sign,
        )
        twin.set_parameters(self.parameters())
        return twin
