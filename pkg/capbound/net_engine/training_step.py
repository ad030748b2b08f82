from __future__ import annotations

import logging
from typing import Callable, Optional

import numpy as np

from capbound.net_engine.dataset import Dataset
from capbound.net_engine.dense_net import DenseNet, max_norm_project
from capbound.net_engine.losses import grad_hinge
from capbound.net_engine.masks import MaskPolicy, MaskSample, sample_masks

logger = logging.getLogger(__name__)

GradientFn = Callable[[DenseNet, Dataset, Optional[MaskSample]], list[np.ndarray]]


def sgd_step(
    net: DenseNet,
    batch: Dataset,
    lr: float,
    mask_policy: MaskPolicy = MaskPolicy.NONE,
    seed: int = 0,
    step: int = 0,
    gradient: GradientFn = grad_hinge,
) -> DenseNet:
    """One projected SGD step: W <- W - lr * grad, then max-norm projection.

    Dropout and dropconnect draw a fresh per-sample `MaskSample` from the
    (seed, step) streams.

    :param net: Current net; not modified.
    :param batch: The mini-batch.
    :param lr: Positive learning rate.
    :param mask_policy: Which masks perturb this step.
    :param gradient: Objective gradient; the mean hinge subgradient by default.
    :return: The updated, feasible net.
    """
    if not (lr > 0.0):
        raise ValueError(f"learning rate must be positive, got {lr}")
    mask = sample_masks(net.spec, mask_policy, seed, step, batch_size=len(batch))
    grads = gradient(net, batch, mask)
    updated = [w - lr * g for w, g in zip(net.weights, grads)]
    return max_norm_project(net.with_weights(updated))
