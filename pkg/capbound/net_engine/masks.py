from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from capbound.model_spec.network_spec import NetworkSpec
from capbound.net_engine.rng import Stream, stream

logger = logging.getLogger(__name__)


class MaskPolicy(enum.Enum):
    """How a training step perturbs the network, with helper methods"""

    NONE = "none"
    DROPOUT = "dropout"
    DROPCONNECT = "dropconnect"

    @classmethod
    def from_keyword(cls, keyword: str) -> "MaskPolicy":
        try:
            return cls(keyword.strip().lower())
        except ValueError:
            choices = ", ".join(policy.value for policy in cls)
            raise ValueError(f"unknown mask policy '{keyword}', expected one of {choices}")

    def keep_probs(self, spec: NetworkSpec) -> list[float]:
        """The keep probabilities this policy samples with, one per weight layer."""
        if self == MaskPolicy.DROPOUT:
            return spec.dropout_keep_probs
        if self == MaskPolicy.DROPCONNECT:
            return spec.dropconnect_keep_probs
        return [1.0] * (spec.depth + 1)


@dataclass(frozen=True)
class MaskSample:
    """Bernoulli keep-masks for one forward pass (or one batch of them).

    ``dropout`` holds u_0, ..., u_P applied to phi_0, ..., phi_P; ``dropconnect``
    holds U_{0,1}, ..., U_{P,P+1} applied elementwise to the weight matrices.
    When ``batch_size`` is set every mask carries a leading sample axis.
    """

    policy: MaskPolicy
    seed: int
    step: int = 0
    dropout: Optional[tuple[np.ndarray, ...]] = None
    dropconnect: Optional[tuple[np.ndarray, ...]] = None
    batch_size: Optional[int] = None

    @property
    def is_batched(self) -> bool:
        return self.batch_size is not None


def sample_masks(
    spec: NetworkSpec,
    policy: MaskPolicy,
    seed: int,
    step: int = 0,
    batch_size: Optional[int] = None,
) -> Optional[MaskSample]:
    """Draws fresh masks for ``policy``; returns None for `MaskPolicy.NONE`.

    Layer k's masks come from the stream (seed, MASK, step, k), so a given
    (step, layer, sample) always sees the same entries.

    :param spec: Architecture whose widths fix the mask shapes.
    :param policy: Dropout or dropconnect.
    :param seed: Run seed.
    :param step: Training step counter.
    :param batch_size: Number of independent per-sample masks, or None for one unbatched mask.
    """
    if policy == MaskPolicy.NONE:
        return None

    widths = spec.widths
    lead = () if batch_size is None else (batch_size,)
    masks = []
    for k, p in enumerate(policy.keep_probs(spec)):
        if policy == MaskPolicy.DROPOUT:
            shape = lead + (widths[k],)
        else:
            shape = lead + (widths[k], widths[k + 1])
        rng = stream(seed, Stream.MASK, step, k)
        masks.append(bernoulli(rng, shape, p))

    if policy == MaskPolicy.DROPOUT:
        return MaskSample(policy, seed, step, dropout=tuple(masks), batch_size=batch_size)
    return MaskSample(policy, seed, step, dropconnect=tuple(masks), batch_size=batch_size)


def bernoulli(rng: np.random.Generator, shape: tuple, p: float) -> np.ndarray:
    """0/1 float mask whose entries are 1 with probability p."""
    return (rng.random(shape) < p).astype(np.float64)


def ones_like_masks(spec: NetworkSpec, policy: MaskPolicy) -> MaskSample:
    """All-keep masks; a forward pass with these equals the unmasked one."""
    if policy == MaskPolicy.NONE:
        raise ValueError("the none policy has no masks")
    widths = spec.widths
    if policy == MaskPolicy.DROPOUT:
        masks = tuple(np.ones(widths[k]) for k in range(spec.depth + 1))
        return MaskSample(policy, seed=0, dropout=masks)
    masks = tuple(np.ones((widths[k], widths[k + 1])) for k in range(spec.depth + 1))
    return MaskSample(MaskPolicy.DROPCONNECT, seed=0, dropconnect=masks)
