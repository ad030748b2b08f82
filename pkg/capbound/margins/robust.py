from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from capbound.margins.margin_report import RobustConfig
from capbound.net_engine.dataset import Dataset
from capbound.net_engine.dense_net import DenseNet, forward_batch
from capbound.net_engine.jacobian import OUTPUT, batch_jacobians, feature_penalty, feature_penalty_grad
from capbound.net_engine.losses import empirical_hinge, grad_hinge, hinge_losses
from capbound.net_engine.masks import MaskSample

logger = logging.getLogger(__name__)


def robust_objective(
    net: DenseNet, batch: Dataset, cfg: RobustConfig, mask: Optional[MaskSample] = None
) -> float:
    """Mean hinge + c * A_{P+1} * mean ||d phi_P(x_i) / dx_i||_F."""
    hinge = empirical_hinge(net, batch, mask)
    if cfg.penalty_weight == 0.0:
        return hinge
    penalty = float(np.mean(feature_penalty(net, batch.samples)))
    return hinge + cfg.penalty_weight * penalty


def robust_objective_grad(
    net: DenseNet, batch: Dataset, cfg: RobustConfig, mask: Optional[MaskSample] = None
) -> tuple[float, list[np.ndarray]]:
    """`robust_objective` and its gradient.

    The hinge part uses the masks when given; the Jacobian penalty is taken on
    the unmasked net.
    """
    hinge_grads = grad_hinge(net, batch, mask)
    if cfg.penalty_weight == 0.0:
        return empirical_hinge(net, batch, mask), hinge_grads

    penalties, penalty_grads = feature_penalty_grad(net, batch.samples)
    value = empirical_hinge(net, batch, mask) + cfg.penalty_weight * float(np.mean(penalties))
    grads = [g + cfg.penalty_weight * pg for g, pg in zip(hinge_grads, penalty_grads)]
    return value, grads


def worst_case_perturbations(net: DenseNet, batch: Dataset, noise_radius: float) -> np.ndarray:
    """First-order worst-case Delta_i = -c * y_i * g_i / ||g_i|| with g_i = J_phi_P(x_i)^T w.

    Samples with a zero score gradient get Delta = 0.
    """
    gradients = batch_jacobians(net, batch.samples, OUTPUT)[:, 0, :]
    norms = np.linalg.norm(gradients, axis=1)
    safe = np.where(norms > 0.0, norms, 1.0)
    directions = np.where((norms > 0.0)[:, None], gradients / safe[:, None], 0.0)
    return -noise_radius * batch.labels[:, None] * directions


def explicit_hinge_losses(net: DenseNet, batch: Dataset, cfg: RobustConfig) -> np.ndarray:
    """Per-sample hinge at the first-order worst case x_i + Delta_i.

    Each loss is clipped to [h_i, h_i + c * A_{P+1} * ||J_phi_P(x_i)||_F]: the clean hinge
    from below, the first-order envelope from above. Off the linear regime the exact
    loss at x_i + Delta_i can land on either side.
    """
    clean = hinge_losses(forward_batch(net, batch.samples).outputs, batch.labels)
    if cfg.noise_radius == 0.0:
        return clean
    perturbed = batch.samples + worst_case_perturbations(net, batch, cfg.noise_radius)
    exact = hinge_losses(forward_batch(net, perturbed).outputs, batch.labels)
    envelope = clean + cfg.penalty_weight * feature_penalty(net, batch.samples)

    capped = int(np.sum(exact > envelope))
    lowered = int(np.sum(exact < clean))
    if capped or lowered:
        logger.debug(
            f"Explicit robust hinge: {capped} of {len(batch)} samples capped at the first-order envelope, "
            f"{lowered} held at the clean hinge"
        )
    return np.maximum(clean, np.minimum(exact, envelope))


def robust_hinge_explicit(net: DenseNet, batch: Dataset, cfg: RobustConfig) -> float:
    """Mean of `explicit_hinge_losses`; the plain hinge when c = 0."""
    if cfg.noise_radius == 0.0:
        return empirical_hinge(net, batch)
    return float(np.mean(explicit_hinge_losses(net, batch, cfg)))
