from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from capbound.model_spec.activation import ActivationKind
from capbound.net_engine.rng import Stream, stream
from capbound.oracle.oracle_result import OracleResult

logger = logging.getLogger(__name__)

LIPSCHITZ_SLACK = 1e-12
BOX = 10.0
LOCAL_SCALE = 1e-3


def lipschitz_check(
    activation: ActivationKind,
    trials: int,
    seed: int = 0,
    lipschitz: Optional[float] = None,
    dim: int = 1,
) -> OracleResult:
    """Searches for violations of ||s(z1) - s(z2)|| <= L ||z1 - z2|| (and ||s(z)|| <= L ||z||).

    Half the pairs are drawn independently in [-10, 10]^d, the other half are
    close pairs z2 = z1 + noise, which probe the steepest local slope. The
    origin form is only checked for origin-passing activations.

    :param lipschitz: Constant to test; the activation's own constant by default.
    :return: Statistic is the largest excess over the claimed bound.
    """
    constant = activation.lipschitz if lipschitz is None else lipschitz
    rng = stream(seed, Stream.PROBE, 20)
    wide = trials // 2
    z1 = rng.uniform(-BOX, BOX, size=(trials, dim))
    z2 = np.empty_like(z1)
    z2[:wide] = rng.uniform(-BOX, BOX, size=(wide, dim))
    z2[wide:] = z1[wide:] + LOCAL_SCALE * rng.standard_normal(size=(trials - wide, dim))

    lhs = np.linalg.norm(activation.apply(z1) - activation.apply(z2), axis=1)
    rhs = constant * np.linalg.norm(z1 - z2, axis=1)
    excess = lhs - rhs
    worst = int(np.argmax(excess))
    statistic = float(excess[worst])
    details = {
        "activation": activation.kind.to_keyword(),
        "lipschitz": constant,
        "pair_violations": int(np.count_nonzero(excess > LIPSCHITZ_SLACK)),
    }
    if statistic > LIPSCHITZ_SLACK:
        details["counterexample"] = [z1[worst].tolist(), z2[worst].tolist()]

    if activation.passes_through_origin:
        origin_excess = np.linalg.norm(activation.apply(z1), axis=1) - constant * np.linalg.norm(z1, axis=1)
        details["origin_violations"] = int(np.count_nonzero(origin_excess > LIPSCHITZ_SLACK))
        statistic = max(statistic, float(np.max(origin_excess)))

    return OracleResult.create(
        f"lipschitz[{activation.kind.to_keyword()}]",
        statistic,
        LIPSCHITZ_SLACK,
        trials,
        seed,
        **details,
    )
