from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from capbound.net_engine.dataset import Dataset
from capbound.net_engine.dense_net import DenseNet, backward, forward_batch
from capbound.net_engine.masks import MaskSample

logger = logging.getLogger(__name__)


def hinge_loss(score: float, label: float) -> float:
    """max(0, 1 - y * score)."""
    return max(0.0, 1.0 - label * score)


def zero_one_loss(score: float, label: float) -> float:
    """1 unless sign(score) equals the label; a zero score counts as an error."""
    return 0.0 if np.sign(score) == label else 1.0


def hinge_losses(scores: np.ndarray, labels: np.ndarray) -> np.ndarray:
    return np.maximum(0.0, 1.0 - labels * scores)


def empirical_hinge(net: DenseNet, dataset: Dataset, mask: Optional[MaskSample] = None) -> float:
    """(1/m) sum_i max(0, 1 - y_i f(x_i))."""
    scores = forward_batch(net, dataset.samples, mask).outputs
    return float(np.mean(hinge_losses(scores, dataset.labels)))


def empirical_01(net: DenseNet, dataset: Dataset) -> float:
    """Fraction of samples with sign(f(x_i)) != y_i."""
    scores = forward_batch(net, dataset.samples).outputs
    return float(np.mean(np.sign(scores) != dataset.labels))


def grad_hinge(
    net: DenseNet, batch: Dataset, mask: Optional[MaskSample] = None
) -> list[np.ndarray]:
    """Subgradient of the mean hinge loss over ``batch`` w.r.t. every weight matrix.

    Samples exactly at y * f = 1 and relu kinks contribute the subgradient 0.

    :param net: The network.
    :param batch: Nonempty batch of samples.
    :param mask: Optional dropout/dropconnect masks, shared or one per sample.
    :return: Gradients matching ``net.weights``.
    """
    trace = forward_batch(net, batch.samples, mask)
    active = (1.0 - batch.labels * trace.outputs) > 0.0
    output_grad = np.where(active, -batch.labels, 0.0) / len(batch)
    return backward(net, trace, output_grad)
