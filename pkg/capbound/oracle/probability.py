from __future__ import annotations

import itertools
import logging
import math

import numpy as np

from capbound.net_engine.masks import bernoulli
from capbound.net_engine.rng import Stream, stream
from capbound.oracle.oracle_result import OracleResult

logger = logging.getLogger(__name__)

SIGMA_MULTIPLE = 4.0
# float slack so zero-variance cases are not failed by summation rounding
ROUNDING_SLACK = 1e-12
MAX_ENUMERATION = 12
CHUNK = 20_000


def mc_masked_norm(v, p: float, trials: int, seed: int = 0) -> OracleResult:
    """Monte Carlo check of E||u * v||^2 = p ||v||^2 for Bernoulli(p) masks u.

    Passes iff |estimate - p ||v||^2| <= 4 sigma_hat / sqrt(N).
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    squares = v * v
    expected = p * float(np.sum(squares))

    rng = stream(seed, Stream.PROBE, 10)
    values = np.empty(trials)
    for start in range(0, trials, CHUNK):
        stop = min(trials, start + CHUNK)
        values[start:stop] = bernoulli(rng, (stop - start, v.shape[0]), p) @ squares

    estimate = float(np.mean(values))
    sigma = float(np.std(values, ddof=1)) if trials > 1 else 0.0
    threshold = SIGMA_MULTIPLE * sigma / math.sqrt(trials) + ROUNDING_SLACK * max(1.0, expected)
    return OracleResult.create(
        "mc_masked_norm",
        abs(estimate - expected),
        threshold,
        trials,
        seed,
        statistical=True,
        estimate=estimate,
        expected=expected,
        sigma=sigma,
        keep_prob=p,
    )


def mc_label_orthogonality(m: int, trials: int, seed: int = 0) -> OracleResult:
    """Monte Carlo check that uniform labelings have E[y_i y_j] = 0 (i != j) and 1 on the diagonal.

    The statistic is the largest off-diagonal |mean|, against 4 / sqrt(N).
    """
    if m < 2:
        raise ValueError("label orthogonality needs m >= 2")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = stream(seed, Stream.PROBE, 11)
    correlation = np.zeros((m, m))
    for start in range(0, trials, CHUNK):
        count = min(trials, start + CHUNK) - start
        labels = np.where(rng.random((count, m)) < 0.5, -1.0, 1.0)
        correlation += labels.T @ labels
    correlation /= trials

    diagonal_exact = bool(np.all(np.diag(correlation) == 1.0))
    off_diagonal = correlation[~np.eye(m, dtype=bool)]
    statistic = float(np.max(np.abs(off_diagonal)))
    threshold = SIGMA_MULTIPLE / math.sqrt(trials)
    if not diagonal_exact:
        statistic = math.inf
    return OracleResult.create(
        "mc_label_orthogonality",
        statistic,
        threshold,
        trials,
        seed,
        statistical=True,
        m=m,
        diagonal_exact=diagonal_exact,
    )


def label_correlation_exact(m: int) -> np.ndarray:
    """E[y_i y_j] by enumerating all 2^m labelings."""
    if m < 1 or m > MAX_ENUMERATION:
        raise ValueError(f"exact enumeration supports 1 <= m <= {MAX_ENUMERATION}, got {m}")
    labelings = np.array(list(itertools.product((-1.0, 1.0), repeat=m)))
    return labelings.T @ labelings / labelings.shape[0]
