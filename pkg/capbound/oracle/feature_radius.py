from __future__ import annotations

import logging
import math

import numpy as np

from capbound.capacity.bounds import feature_radius_bound
from capbound.model_spec.network_spec import DataStats, NetworkSpec
from capbound.net_engine.dataset import Dataset, sample_sphere
from capbound.net_engine.dense_net import DenseNet, forward_batch, init_net, max_norm_project
from capbound.net_engine.masks import MaskPolicy, sample_masks
from capbound.net_engine.rng import Stream, stream
from capbound.oracle.oracle_result import OracleResult

logger = logging.getLogger(__name__)

BOUND_SLACK = 1e-12
# random nets are blown up by this factor before projection so most columns sit on their cap
INFLATION = 4.0
SIGMA_MULTIPLE = 4.0


def random_feasible_net(spec: NetworkSpec, seed: int, inflation: float = INFLATION) -> DenseNet:
    net = init_net(spec, seed)
    return max_norm_project(net.with_weights([inflation * w for w in net.weights]))


def aligned_net(spec: NetworkSpec, direction) -> DenseNet:
    """Rank-1 net whose every incoming vector sits on its cap and points along the previous layer.

    For relu (and leaky relu with slope <= 1) an input x = R u, u the unit
    direction, reaches ||phi_P(x)||^2 = R^2 prod_k h_k A_k^2 exactly.
    """
    u = np.asarray(direction, dtype=np.float64).reshape(-1)
    if u.shape[0] != spec.input_dim:
        raise ValueError(f"direction has dimension {u.shape[0]}, spec expects {spec.input_dim}")
    norm = np.linalg.norm(u)
    if norm == 0.0:
        raise ValueError("direction must be nonzero")
    u = u / norm

    widths = spec.widths
    weights = [np.outer(u, np.full(widths[1], spec.max_norms[0]))]
    for k in range(1, spec.depth + 1):
        column = np.full(widths[k], 1.0 / math.sqrt(widths[k]))
        weights.append(np.outer(column, np.full(widths[k + 1], spec.max_norms[k])))
    return DenseNet(spec, tuple(weights))


def feature_radius_check(
    spec: NetworkSpec,
    dataset: Dataset,
    nets: int,
    seed: int = 0,
    radius: float | None = None,
    dropout: bool = False,
    mask_trials: int = 200,
) -> OracleResult:
    """Checks max_i ||phi_P(x_i)||^2 against the feature-radius bound on random feasible nets.

    With ``dropout`` the squared feature norm under the spec's dropout keep
    probabilities is averaged over ``mask_trials`` masks per sample and
    compared with the keep-probability-weighted bound, allowing 4 sigma of
    Monte Carlo error.

    :param radius: Declared R; the measured dataset radius when omitted.
    :return: Statistic is the largest measured-minus-bound excess.
    """
    declared = radius if radius is not None else dataset.radius()
    if dataset.radius() > declared * (1.0 + BOUND_SLACK):
        raise ValueError(f"dataset radius {dataset.radius()} exceeds declared R = {declared}")
    data = DataStats(radius=declared)
    keep_probs = spec.dropout_keep_probs if dropout else None
    bound = feature_radius_bound(spec, data, keep_probs)

    worst_excess = -math.inf
    worst_ratio = 0.0
    for index in range(nets):
        net = random_feasible_net(spec, _net_seed(seed, index))
        if dropout:
            excess, measured = _dropout_excess(net, dataset, bound, mask_trials, seed, index)
        else:
            measured = float(np.max(np.sum(forward_batch(net, dataset.samples).features ** 2, axis=1)))
            excess = measured - bound
        worst_excess = max(worst_excess, excess)
        worst_ratio = max(worst_ratio, measured / bound if bound > 0.0 else math.inf)

    return OracleResult.create(
        "feature_radius_dropout" if dropout else "feature_radius",
        worst_excess,
        BOUND_SLACK * max(1.0, bound),
        nets,
        seed,
        statistical=dropout,
        bound=bound,
        max_ratio=worst_ratio,
        dataset_size=len(dataset),
    )


def robust_radius_check(
    spec: NetworkSpec,
    dataset: Dataset,
    c: float,
    nets: int,
    seed: int = 0,
    radius: float | None = None,
    perturbations: int = 16,
) -> OracleResult:
    """Feature radius of perturbed inputs x + Delta, ||Delta|| <= c.

    Each sample gets ``perturbations`` random Delta on the c-sphere plus the
    radial one Delta = c x / ||x||; the worst is kept. The pass criterion is
    the triangle-inequality form (R + c)^2 prod_k L_k^2 h_k A_k^2; whether the
    (R^2 + c^2) form also held is recorded in the details.
    """
    declared = radius if radius is not None else dataset.radius()
    if c < 0.0:
        raise ValueError("noise radius must be nonnegative")
    sound_bound = feature_radius_bound(spec, DataStats(radius=declared + c))
    layer_product = feature_radius_bound(spec, DataStats(radius=1.0))
    stated_bound = (declared * declared + c * c) * layer_product

    m, d = dataset.samples.shape
    rng = stream(seed, Stream.PROBE, 30)
    deltas = sample_sphere(rng, m * perturbations, d, c).reshape(m, perturbations, d) if c > 0.0 else np.zeros((m, perturbations, d))
    norms = np.linalg.norm(dataset.samples, axis=1, keepdims=True)
    radial = np.where(norms > 0.0, c * dataset.samples / np.where(norms > 0.0, norms, 1.0), 0.0)
    candidates = np.concatenate([deltas, radial[:, None, :]], axis=1)
    perturbed = (dataset.samples[:, None, :] + candidates).reshape(-1, d)

    measured = 0.0
    for index in range(nets):
        net = random_feasible_net(spec, _net_seed(seed, index))
        measured = max(measured, float(np.max(np.sum(forward_batch(net, perturbed).features ** 2, axis=1))))

    stated_held = measured <= stated_bound * (1.0 + BOUND_SLACK)
    if not stated_held:
        logger.warning(
            f"Measured perturbed feature radius {measured:.6g} exceeds the (R^2 + c^2) form {stated_bound:.6g}"
        )
    return OracleResult.create(
        "robust_radius",
        measured - sound_bound,
        BOUND_SLACK * max(1.0, sound_bound),
        nets,
        seed,
        measured=measured,
        sound_bound=sound_bound,
        stated_bound=stated_bound,
        stated_form_held=stated_held,
        noise_radius=c,
    )


def _dropout_excess(
    net: DenseNet, dataset: Dataset, bound: float, trials: int, seed: int, index: int
) -> tuple[float, float]:
    m = len(dataset)
    repeated = np.repeat(dataset.samples, trials, axis=0)
    mask = sample_masks(net.spec, MaskPolicy.DROPOUT, _net_seed(seed, index), batch_size=m * trials)
    norms = np.sum(forward_batch(net, repeated, mask).features ** 2, axis=1).reshape(m, trials)
    means = norms.mean(axis=1)
    sigmas = norms.std(axis=1, ddof=1) if trials > 1 else np.zeros(m)
    excess = means - bound - SIGMA_MULTIPLE * sigmas / math.sqrt(trials)
    return float(np.max(excess)), float(np.max(means))


def _net_seed(seed: int, index: int) -> int:
    return int(stream(seed, Stream.INIT, 1000, index).integers(2**31))
