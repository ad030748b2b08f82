from __future__ import annotations

import logging
import math
from typing import Sequence

import numpy as np

from capbound.margins.estimators import certify
from capbound.margins.margin_report import RobustConfig
from capbound.net_engine.dataset import Dataset
from capbound.net_engine.dense_net import DenseNet, check_input, forward, forward_batch
from capbound.oracle.oracle_result import OracleResult

logger = logging.getLogger(__name__)

GRID_POINTS = 2001
GRID_CHUNK = 200_000


def margin_inequality_check(
    cases: Sequence[tuple[DenseNet, Dataset]],
    radius: float,
    ball_samples: int = 256,
    seed: int = 0,
    tol: float | None = None,
) -> OracleResult:
    """Counts samples whose input-margin certificate exceeds the upper estimate plus tol.

    Misclassified samples are skipped and counted. For linear nets (P = 0) the
    largest gap between certificate and upper estimate is also reported.
    """
    violations = 0
    probes = 0
    skipped = 0
    linear_gap = 0.0
    for net, dataset in cases:
        cfg = RobustConfig.create(net.spec, 0.0, radius, ball_samples=ball_samples, bisection_tol=tol, seed=seed)
        scores = forward_batch(net, dataset.samples).outputs
        for x, y, score in zip(dataset.samples, dataset.labels, scores):
            if not (y * score > 0.0):
                skipped += 1
                continue
            certificate = certify(net, x, cfg)
            probes += 1
            if certificate.value > certificate.search.upper + cfg.tol:
                violations += 1
                logger.warning(
                    f"Certificate {certificate.value:.6g} exceeds upper estimate {certificate.search.upper:.6g}"
                )
            if net.spec.depth == 0 and math.isfinite(certificate.search.upper):
                linear_gap = max(linear_gap, abs(certificate.search.upper - certificate.value))

    return OracleResult.create(
        "margin_inequality",
        float(violations),
        0.0,
        probes,
        seed,
        nets=len(cases),
        violations=violations,
        skipped_misclassified=skipped,
        max_linear_gap=linear_gap,
    )


def grid_input_margin(net: DenseNet, x: np.ndarray, radius: float, points: int = GRID_POINTS) -> float:
    """Brute-force input margin of a 2-D input on a points x points grid over [-4R, 4R]^2.

    Returns the distance from x to the nearest grid point where the sign of f
    differs from sign f(x) (or f vanishes); infinity if there is none. The
    true margin lies within one grid pitch of the returned value.
    """
    x = check_input(net, x, batched=False)
    if x.shape[0] != 2:
        raise ValueError("grid search needs a 2-D input")
    f0 = forward(net, x).output
    if f0 == 0.0:
        return 0.0
    sign = math.copysign(1.0, f0)

    axis = np.linspace(-4.0 * radius, 4.0 * radius, points)
    gx, gy = np.meshgrid(axis, axis, indexing="ij")
    grid = np.column_stack([gx.reshape(-1), gy.reshape(-1)])

    best = math.inf
    for start in range(0, grid.shape[0], GRID_CHUNK):
        chunk = grid[start:start + GRID_CHUNK]
        flipped = sign * forward_batch(net, chunk).outputs <= 0.0
        if np.any(flipped):
            best = min(best, float(np.min(np.linalg.norm(chunk[flipped] - x, axis=1))))
    return best
