from __future__ import annotations

import itertools
import logging
from typing import Optional

import numpy as np

from capbound.capacity.bounds import vc_bound_mlp
from capbound.margins.trainer import Schedule, train
from capbound.model_spec.network_spec import DataStats, NetworkSpec
from capbound.net_engine.dataset import Dataset, sample_sphere
from capbound.net_engine.dense_net import forward_batch, init_net
from capbound.net_engine.rng import Stream, stream
from capbound.oracle.oracle_result import OracleResult

logger = logging.getLogger(__name__)

MAX_POINTS = 12
DEFAULT_EPOCHS = 2000
DEFAULT_LR = 0.05
DEFAULT_RESTARTS = 5


def shattering_probe(
    spec: NetworkSpec,
    data: DataStats,
    m: int,
    seed: int = 0,
    epochs: int = DEFAULT_EPOCHS,
    lr: float = DEFAULT_LR,
    restarts: int = DEFAULT_RESTARTS,
    points: Optional[np.ndarray] = None,
) -> OracleResult:
    """Tries to realize every labeling of m points with functional margin 1.

    Each labeling gets up to ``restarts`` full-batch projected SGD runs that
    stop as soon as min_i y_i f(x_i) >= 1. If every labeling is realized the
    set is shattered and m must not exceed the VC bound; any labeling left
    unrealized makes the probe inconclusive, which counts as a pass.

    :param points: Explicit points; m points on the R-sphere are drawn when omitted.
    :raises ValueError: If m exceeds 12 or the points do not fit the spec.
    """
    if m < 1 or m > MAX_POINTS:
        raise ValueError(f"shattering probe enumerates 2^m labelings; need 1 <= m <= {MAX_POINTS}")
    if points is None:
        points = sample_sphere(stream(seed, Stream.PROBE, 40), m, spec.input_dim, data.radius)
    points = np.asarray(points, dtype=np.float64)
    if points.shape != (m, spec.input_dim):
        raise ValueError(f"points have shape {points.shape}, expected {(m, spec.input_dim)}")

    bound = vc_bound_mlp(spec, data).value
    unrealized = []
    for labeling_index, labeling in enumerate(itertools.product((-1.0, 1.0), repeat=m)):
        dataset = Dataset(points, np.array(labeling))
        if not _realize(spec, dataset, seed, labeling_index, epochs, lr, restarts):
            unrealized.append(list(labeling))

    shattered = not unrealized
    if not shattered:
        logger.info(f"Shattering probe inconclusive: {len(unrealized)} of {2**m} labelings not realized")
    return OracleResult.create(
        "shattering",
        float(m) if shattered else 0.0,
        bound if shattered else 0.0,
        2**m,
        seed,
        m=m,
        bound=bound,
        shattered=shattered,
        inconclusive=not shattered,
        unrealized_labelings=unrealized,
        note=None if shattered else "not every labeling was realized; the probe can only falsify",
    )


def _realize(
    spec: NetworkSpec, dataset: Dataset, seed: int, labeling_index: int, epochs: int, lr: float, restarts: int
) -> bool:
    for restart in range(restarts):
        run_seed = int(stream(seed, Stream.INIT, 2000, labeling_index, restart).integers(2**31))
        schedule = Schedule(epochs=epochs, lr=lr, batch_size=len(dataset), seed=run_seed, stop_on_zero_hinge=True)
        result = train(init_net(spec, run_seed), dataset, schedule, log_every=0)
        scores = forward_batch(result.net, dataset.samples).outputs
        if np.min(dataset.labels * scores) >= 1.0:
            return True
    return False
