import enum
import logging

import numpy as np

logger = logging.getLogger(__name__)


class Stream(enum.IntEnum):
    """Purposes that own an independent random stream."""

    INIT = 1
    MASK = 2
    SHUFFLE = 3
    PROBE = 4
    DATA = 5


def stream(seed: int, purpose: Stream, *counters: int) -> np.random.Generator:
    """Counter-based generator for ``(seed, purpose, *counters)``.

    The same key always yields the same sequence regardless of what other
    streams were consumed before, so masks stay reproducible per
    (step, layer) and training order does not leak between purposes.

    :param seed: The run seed.
    :param purpose: Which consumer the stream belongs to.
    :param counters: Further nonnegative integers, e.g. step and layer.
    :return: A fresh generator on a Philox bit generator.
    """
    key = (int(purpose),) + tuple(int(c) for c in counters)
    sequence = np.random.SeedSequence(int(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(sequence))
