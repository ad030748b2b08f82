from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from capbound.model_spec.network_spec import NetworkSpec
from capbound.net_engine.masks import MaskPolicy, MaskSample
from capbound.net_engine.rng import Stream, stream

logger = logging.getLogger(__name__)

# slack on the max-norm cap; keeps projection idempotent under rounding
PROJECTION_SLACK = 1e-12


class ShapeError(ValueError):
    """Raised on input dimension or mask shape mismatches."""
    pass


@dataclass(frozen=True)
class DenseNet:
    """Concrete weights W_{k,k+1} of shape (h_k, h_{k+1}), k = 0..P, realizing a spec.

    Column t of ``weights[k]`` is the incoming weight vector of neuron t in
    layer k+1 and is capped by ``spec.max_norms[k]``. Weight arrays are
    read-only; updates build a new net.
    """

    spec: NetworkSpec
    weights: tuple[np.ndarray, ...]

    def __post_init__(self):
        widths = self.spec.widths
        if len(self.weights) != self.spec.depth + 1:
            raise ShapeError(f"expected {self.spec.depth + 1} weight matrices, got {len(self.weights)}")
        frozen = []
        for k, w in enumerate(self.weights):
            w = np.array(w, dtype=np.float64)
            if w.shape != (widths[k], widths[k + 1]):
                raise ShapeError(
                    f"weights[{k}] has shape {w.shape}, expected {(widths[k], widths[k + 1])}"
                )
            w.flags.writeable = False
            frozen.append(w)
        object.__setattr__(self, "weights", tuple(frozen))

    @property
    def output_weights(self) -> np.ndarray:
        """The output vector w = w^1_{P,P+1}."""
        return self.weights[-1][:, 0]

    def with_weights(self, weights: Sequence[np.ndarray]) -> "DenseNet":
        return DenseNet(self.spec, tuple(weights))

    def column_norms(self) -> list[np.ndarray]:
        return [np.linalg.norm(w, axis=0) for w in self.weights]

    def is_feasible(self) -> bool:
        """Every incoming vector obeys its max-norm cap up to `PROJECTION_SLACK`."""
        for norms, cap in zip(self.column_norms(), self.spec.max_norms):
            if np.any(norms > cap + PROJECTION_SLACK * max(1.0, cap)):
                return False
        return True


@dataclass(frozen=True)
class ForwardTrace:
    """Layer outputs phi_0(x), ..., phi_P(x), preactivations z_1..z_P and the score.

    Under dropout the stored phis are the masked values u_k * phi_k that feed
    the next layer. ``at_kink`` is set when a piecewise-linear preactivation
    sits exactly on its kink.
    """

    phis: list[np.ndarray]
    preactivations: list[np.ndarray]
    output: float
    at_kink: bool = False

    @property
    def features(self) -> np.ndarray:
        """phi_P(x)."""
        return self.phis[-1]


@dataclass(frozen=True)
class BatchTrace:
    """`ForwardTrace` for n samples at once; arrays carry a leading sample axis."""

    phis: list[np.ndarray]
    preactivations: list[np.ndarray]
    outputs: np.ndarray
    at_kink: np.ndarray
    mask: Optional[MaskSample] = field(default=None, repr=False)

    @property
    def features(self) -> np.ndarray:
        return self.phis[-1]

    def trace(self, i: int) -> ForwardTrace:
        return ForwardTrace(
            phis=[phi[i] for phi in self.phis],
            preactivations=[z[i] for z in self.preactivations],
            output=float(self.outputs[i]),
            at_kink=bool(self.at_kink[i]),
        )


def init_net(spec: NetworkSpec, seed: int) -> DenseNet:
    """Uniform [-a, a] weights with a = A_{k+1}/sqrt(h_k), then max-norm projected.

    :param spec: The architecture.
    :param seed: Seed of the initialization streams (one per layer).
    :return: A feasible net, identical for identical seeds.
    """
    widths = spec.widths
    weights = []
    for k, cap in enumerate(spec.max_norms):
        scale = cap / np.sqrt(widths[k])
        rng = stream(seed, Stream.INIT, k)
        weights.append(rng.uniform(-scale, scale, size=(widths[k], widths[k + 1])))
    return max_norm_project(DenseNet(spec, tuple(weights)))


def max_norm_project(net: DenseNet) -> DenseNet:
    """Rescales every incoming vector with ||w^t|| > A to norm exactly A; others are untouched."""
    projected = []
    changed = 0
    for w, cap in zip(net.weights, net.spec.max_norms):
        norms = np.linalg.norm(w, axis=0)
        over = norms > cap + PROJECTION_SLACK * max(1.0, cap)
        if not np.any(over):
            projected.append(w)
            continue
        w = w.copy()
        w[:, over] *= cap / norms[over]
        projected.append(w)
        changed += int(np.count_nonzero(over))
    if changed == 0:
        return net
    logger.debug(f"Projected {changed} incoming weight vectors onto their max-norm ball")
    return net.with_weights(projected)


def forward(net: DenseNet, x: np.ndarray) -> ForwardTrace:
    """Evaluates phi_k(x) = sigma(phi_{k-1}(x) W_{k-1,k}) and the linear output.

    :raises ShapeError: If dim(x) differs from the spec's input dimension.
    """
    x = check_input(net, x, batched=False)
    return forward_batch(net, x[None, :]).trace(0)


def forward_masked(net: DenseNet, x: np.ndarray, mask: MaskSample) -> ForwardTrace:
    """Forward pass of one sample under dropout (u_k * phi_k) or dropconnect (U * W).

    :raises ShapeError: If the mask is batched or its shapes do not match the spec.
    """
    x = check_input(net, x, batched=False)
    if mask.is_batched:
        raise ShapeError("forward_masked expects an unbatched mask")
    return forward_batch(net, x[None, :], mask).trace(0)


def forward_batch(net: DenseNet, X: np.ndarray, mask: Optional[MaskSample] = None) -> BatchTrace:
    """Vectorized forward pass over the rows of X, optionally masked.

    Unbatched masks are shared by every row; batched masks need one entry per row.
    """
    X = check_input(net, X, batched=True)
    _check_mask(net, mask, X.shape[0])

    dropout = mask.dropout if mask is not None and mask.policy == MaskPolicy.DROPOUT else None
    dropconnect = (
        mask.dropconnect if mask is not None and mask.policy == MaskPolicy.DROPCONNECT else None
    )

    phi = X if dropout is None else X * dropout[0]
    phis = [phi]
    preactivations = []
    at_kink = np.zeros(X.shape[0], dtype=bool)
    for k, layer in enumerate(net.spec.hidden):
        z = _propagate(phi, net.weights[k], None if dropconnect is None else dropconnect[k])
        phi = layer.activation.apply(z)
        if dropout is not None:
            phi = phi * dropout[k + 1]
        at_kink |= np.any(layer.activation.kink_mask(z), axis=1)
        preactivations.append(z)
        phis.append(phi)

    last = net.spec.depth
    outputs = _propagate(phi, net.weights[last], None if dropconnect is None else dropconnect[last])
    return BatchTrace(phis, preactivations, outputs[:, 0], at_kink, mask)


def backward(net: DenseNet, trace: BatchTrace, output_grad: np.ndarray) -> list[np.ndarray]:
    """Backpropagates d(objective)/d(score) per sample to every weight matrix.

    Relu kinks take the subderivative 0. The masks recorded in the trace are
    applied on the way back.

    :param trace: The batch forward trace the scores came from.
    :param output_grad: Shape (n,), derivative of the objective w.r.t. each score.
    :return: Gradients matching ``net.weights``.
    """
    mask = trace.mask
    dropout = mask.dropout if mask is not None and mask.policy == MaskPolicy.DROPOUT else None
    dropconnect = (
        mask.dropconnect if mask is not None and mask.policy == MaskPolicy.DROPCONNECT else None
    )

    P = net.spec.depth
    grads: list[Optional[np.ndarray]] = [None] * (P + 1)
    g = np.asarray(output_grad, dtype=np.float64)[:, None]
    for k in range(P, -1, -1):
        U = None if dropconnect is None else dropconnect[k]
        grads[k] = _weight_grad(trace.phis[k], g, U)
        if k == 0:
            break
        g_phi = _propagate_back(g, net.weights[k], U)
        if dropout is not None:
            g_phi = g_phi * dropout[k]
        g = g_phi * net.spec.hidden[k - 1].activation.derivative(trace.preactivations[k - 1])
    return grads


def _propagate(phi: np.ndarray, w: np.ndarray, U: Optional[np.ndarray]) -> np.ndarray:
    if U is None:
        return phi @ w
    if U.ndim == 2:
        return phi @ (U * w)
    return np.einsum("ni,nij->nj", phi, U * w)


def _propagate_back(g: np.ndarray, w: np.ndarray, U: Optional[np.ndarray]) -> np.ndarray:
    if U is None:
        return g @ w.T
    if U.ndim == 2:
        return g @ (U * w).T
    return np.einsum("nj,nij->ni", g, U * w)


def _weight_grad(phi: np.ndarray, g: np.ndarray, U: Optional[np.ndarray]) -> np.ndarray:
    if U is None:
        return phi.T @ g
    if U.ndim == 2:
        return U * (phi.T @ g)
    return np.einsum("ni,nj,nij->ij", phi, g, U)


def check_input(net: DenseNet, x: np.ndarray, batched: bool) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    expected_ndim = 2 if batched else 1
    if x.ndim != expected_ndim or x.shape[-1] != net.spec.input_dim:
        raise ShapeError(
            f"input has shape {x.shape}, expected "
            f"{'(n, ' if batched else '('}{net.spec.input_dim}{')' if batched else ',)'}"
        )
    return x


def _check_mask(net: DenseNet, mask: Optional[MaskSample], n: int) -> None:
    if mask is None:
        return
    widths = net.spec.widths
    if mask.policy == MaskPolicy.DROPOUT:
        masks = mask.dropout or ()
        expected = [(widths[k],) for k in range(net.spec.depth + 1)]
    elif mask.policy == MaskPolicy.DROPCONNECT:
        masks = mask.dropconnect or ()
        expected = [(widths[k], widths[k + 1]) for k in range(net.spec.depth + 1)]
    else:
        return

    if len(masks) != len(expected):
        raise ShapeError(f"expected {len(expected)} {mask.policy.value} masks, got {len(masks)}")
    lead = (n,) if mask.is_batched else ()
    for k, (m, shape) in enumerate(zip(masks, expected)):
        if m.shape != lead + shape:
            raise ShapeError(f"{mask.policy.value} mask {k} has shape {m.shape}, expected {lead + shape}")
