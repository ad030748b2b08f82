from __future__ import annotations

import logging
from typing import Callable, Sequence

import numpy as np

from capbound.margins.margin_report import RobustConfig
from capbound.margins.robust import robust_objective, robust_objective_grad
from capbound.model_spec.network_spec import LayerSpec, NetworkSpec
from capbound.net_engine.dataset import Dataset, sample_ball
from capbound.net_engine.dense_net import DenseNet, forward, forward_batch
from capbound.net_engine.jacobian import jacobian
from capbound.net_engine.losses import empirical_hinge, grad_hinge
from capbound.net_engine.rng import Stream, stream
from capbound.oracle.feature_radius import random_feasible_net
from capbound.oracle.oracle_result import OracleResult

logger = logging.getLogger(__name__)

STEP = 1e-5
PROBE_TOL = 1e-4
WORST_TOL = 1e-2
REQUIRED_FRACTION = 0.95
# relu probes whose preactivations or hinge margins sit this close to a kink are skipped
GENERICITY_GAP = 1e-3
BATCH = 4
COMPARISONS_PER_PROBE = 3
MAX_ATTEMPTS_PER_PROBE = 20
PENALTY_C = 0.1


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """||a - n|| / max(||a||, ||n||, 1e-6)."""
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    scale = max(float(np.linalg.norm(a)), float(np.linalg.norm(n)), 1e-6)
    return float(np.linalg.norm(a - n)) / scale


def numeric_input_gradient(net: DenseNet, x: np.ndarray, h: float = STEP) -> np.ndarray:
    grad = np.empty_like(x)
    for i in range(x.shape[0]):
        e = np.zeros_like(x)
        e[i] = h
        grad[i] = (forward(net, x + e).output - forward(net, x - e).output) / (2.0 * h)
    return grad


def numeric_weight_gradient(
    net: DenseNet, objective: Callable[[DenseNet], float], h: float = STEP
) -> list[np.ndarray]:
    grads = []
    for k, w in enumerate(net.weights):
        g = np.empty_like(w)
        for index in np.ndindex(w.shape):
            plus, minus = w.copy(), w.copy()
            plus[index] += h
            minus[index] -= h
            up = objective(_replace(net, k, plus))
            down = objective(_replace(net, k, minus))
            g[index] = (up - down) / (2.0 * h)
        grads.append(g)
    return grads


def default_inventory(seed: int = 0, input_dim: int = 3) -> list[DenseNet]:
    """Small nets the gradient oracle probes: two tanh nets, a generic relu net and a linear one."""
    specs = [
        NetworkSpec(
            input_dim=input_dim,
            hidden=(LayerSpec(width=4, activation="tanh", max_norm=2.0),
                    LayerSpec(width=3, activation="tanh", max_norm=2.0)),
            output_max_norm=2.0,
        ),
        NetworkSpec(
            input_dim=input_dim,
            hidden=(LayerSpec(width=5, activation="tanh", max_norm=1.5),),
            output_max_norm=3.0,
        ),
        NetworkSpec(
            input_dim=input_dim,
            hidden=(LayerSpec(width=4, activation="relu", max_norm=2.0),
                    LayerSpec(width=3, activation="relu", max_norm=2.0)),
            output_max_norm=2.0,
        ),
        NetworkSpec(input_dim=input_dim, output_max_norm=2.0),
    ]
    return [random_feasible_net(spec, seed + i, inflation=1.0) for i, spec in enumerate(specs)]


def finite_diff_suite(nets: Sequence[DenseNet], probes_per_net: int = 5, seed: int = 0) -> OracleResult:
    """Central-difference check of the input Jacobian, the hinge gradient and the robust gradient.

    A probe is one random batch; each of the COMPARISONS_PER_PROBE analytic
    derivatives is compared with central differences of step 1e-5. Batches
    near relu kinks or the hinge corner are redrawn (at most
    MAX_ATTEMPTS_PER_PROBE draws per probe), so every net normally contributes
    ``probes_per_net`` probes. Passes when at least 95% of the comparisons are
    within 1e-4 relative error and none exceeds 1e-2.
    """
    errors: list[float] = []
    skipped = 0
    for net_index, net in enumerate(nets):
        rng = stream(seed, Stream.PROBE, 50, net_index)
        cfg = RobustConfig.create(net.spec, PENALTY_C, radius=1.0)
        probed = attempts = 0
        while probed < probes_per_net and attempts < MAX_ATTEMPTS_PER_PROBE * probes_per_net:
            attempts += 1
            batch = Dataset(
                sample_ball(rng, BATCH, net.spec.input_dim, 1.0),
                np.where(rng.random(BATCH) < 0.5, -1.0, 1.0),
            )
            if not _generic(net, batch):
                skipped += 1
                continue
            probed += 1

            x = batch.samples[0]
            errors.append(relative_error(jacobian(net, x)[0], numeric_input_gradient(net, x)))

            numeric = numeric_weight_gradient(net, lambda candidate: empirical_hinge(candidate, batch))
            errors.append(_weights_error(grad_hinge(net, batch), numeric))

            numeric = numeric_weight_gradient(net, lambda candidate: robust_objective(candidate, batch, cfg))
            errors.append(_weights_error(robust_objective_grad(net, batch, cfg)[1], numeric))

    if not errors:
        return OracleResult.create(
            "finite_diff", float("inf"), 1.0, 0, seed, skipped=skipped, note="every probe was filtered"
        )

    errors_array = np.array(errors)
    fraction_ok = float(np.mean(errors_array <= PROBE_TOL))
    worst = float(np.max(errors_array))
    statistic = max((1.0 - fraction_ok) / (1.0 - REQUIRED_FRACTION), worst / WORST_TOL)
    return OracleResult.create(
        "finite_diff",
        statistic,
        1.0,
        len(errors),
        seed,
        fraction_within_tol=fraction_ok,
        worst_relative_error=worst,
        skipped=skipped,
    )


def _generic(net: DenseNet, batch: Dataset) -> bool:
    trace = forward_batch(net, batch.samples)
    piecewise = [layer.activation.kind.is_piecewise_linear() for layer in net.spec.hidden]
    for z, linear in zip(trace.preactivations, piecewise):
        if linear and np.min(np.abs(z)) < GENERICITY_GAP:
            return False
    return bool(np.min(np.abs(1.0 - batch.labels * trace.outputs)) >= GENERICITY_GAP)


def _weights_error(analytic: list[np.ndarray], numeric: list[np.ndarray]) -> float:
    return relative_error(
        np.concatenate([a.reshape(-1) for a in analytic]),
        np.concatenate([n.reshape(-1) for n in numeric]),
    )


def _replace(net: DenseNet, k: int, w: np.ndarray) -> DenseNet:
    weights = list(net.weights)
    weights[k] = w
    return net.with_weights(weights)
