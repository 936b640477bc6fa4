"""Multinomial logistic regression: loss, gradient and accuracy."""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp, softmax

from ..aggregation import GradientMessage
from ..errors import ParameterError
from .data import Dataset


@dataclass
class ModelState:
    """Flat weights w = [w_0; ...; w_{C-1}], each w_j = [weights; bias]."""

    weights: np.ndarray
    num_classes: int

    @classmethod
    def zeros(cls, num_classes: int, feature_dim: int) -> "ModelState":
        return cls(np.zeros(num_classes * (feature_dim + 1)), num_classes)

    @property
    def dimension(self) -> int:
        return int(self.weights.size)

    def matrix(self) -> np.ndarray:
        """Weights as a (C, b + 1) array, one row per class."""
        return self.weights.reshape(self.num_classes, -1)


def _augmented(features: np.ndarray) -> np.ndarray:
    """u_k = [x_k; 1]."""
    return np.hstack([features, np.ones((features.shape[0], 1))])


def _logits(state: ModelState, data: Dataset) -> np.ndarray:
    matrix = state.matrix()
    if matrix.shape[1] != data.feature_dim + 1:
        raise ParameterError(
            f"Model expects {matrix.shape[1] - 1} features, dataset has {data.feature_dim}"
        )
    return _augmented(data.features) @ matrix.T


def cross_entropy_loss(state: ModelState, data: Dataset) -> float:
    """Mean negative log-likelihood of the true class."""
    logits = _logits(state, data)
    true_class = logits[np.arange(len(data)), data.labels]
    return float(np.mean(logsumexp(logits, axis=1) - true_class))


def loss_gradient(state: ModelState, data: Dataset) -> np.ndarray:
    """Gradient of cross_entropy_loss with respect to the flat weights."""
    if len(data) == 0:
        raise ParameterError("Gradient needs at least one sample")
    probabilities = softmax(_logits(state, data), axis=1)
    probabilities[np.arange(len(data)), data.labels] -= 1.0
    return (probabilities.T @ _augmented(data.features) / len(data)).ravel()


def local_gradient(
    state: ModelState,
    data: Dataset,
    batch_indices: Optional[np.ndarray] = None,
) -> GradientMessage:
    """One device's gradient over its full local data or the given batch."""
    batch = data if batch_indices is None else data.subset(batch_indices)
    return GradientMessage.from_gradient(loss_gradient(state, batch))


def accuracy(state: ModelState, data: Dataset) -> float:
    predictions = np.argmax(_logits(state, data), axis=1)
    return float(np.mean(predictions == data.labels))
