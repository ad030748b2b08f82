from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from capbound.net_engine.dense_net import BatchTrace, DenseNet, check_input, forward_batch
from capbound.net_engine.rng import Stream, stream

logger = logging.getLogger(__name__)

POWER_TOL = 1e-10
POWER_MAX_ITER = 10_000

OUTPUT = "output"
FEATURES = "features"


@dataclass(frozen=True)
class JacobianChain:
    """Input Jacobians J_k = d phi_k / dx for k = 0..P over a batch.

    ``jacobians[k]`` has shape (n, h_k, d); ``products[k]`` holds
    M_k = W_{k-1,k}^T J_{k-1} (entry 0 unused) so that J_k = D_k M_k.
    """

    trace: BatchTrace
    jacobians: list[np.ndarray]
    products: list[np.ndarray]

    @property
    def features(self) -> np.ndarray:
        return self.jacobians[-1]

    def output(self, net: DenseNet) -> np.ndarray:
        """Jacobian of the score, shape (n, 1, d)."""
        return np.einsum("i,nid->nd", net.output_weights, self.jacobians[-1])[:, None, :]


def jacobian_chain(net: DenseNet, X: np.ndarray) -> JacobianChain:
    """Accumulates J_k = diag(sigma'(z_k)) W_{k-1,k}^T J_{k-1} from J_0 = I."""
    X = check_input(net, X, batched=True)
    trace = forward_batch(net, X)
    n, d = X.shape
    J = np.broadcast_to(np.eye(d), (n, d, d))
    jacobians = [J]
    products = [J]
    for k, layer in enumerate(net.spec.hidden):
        M = np.einsum("ji,njd->nid", net.weights[k], J)
        J = layer.activation.derivative(trace.preactivations[k])[:, :, None] * M
        products.append(M)
        jacobians.append(J)
    return JacobianChain(trace, jacobians, products)


def jacobian(net: DenseNet, x: np.ndarray, of: str = OUTPUT) -> np.ndarray:
    """Input Jacobian at a single x.

    :param of: ``"output"`` for the 1 x d Jacobian of the score, ``"features"``
        for the h_P x d Jacobian of phi_P.
    :return: The Jacobian; exact at generic points, relu kinks use subderivative 0.
    """
    x = check_input(net, x, batched=False)
    return batch_jacobians(net, x[None, :], of)[0]


def batch_jacobians(net: DenseNet, X: np.ndarray, of: str = OUTPUT) -> np.ndarray:
    chain = jacobian_chain(net, X)
    if of == OUTPUT:
        return chain.output(net)
    if of == FEATURES:
        return np.array(chain.features)
    raise ValueError(f"unknown Jacobian target '{of}', expected '{OUTPUT}' or '{FEATURES}'")


def jacobian_frobenius(net: DenseNet, x: np.ndarray, of: str = OUTPUT) -> float:
    return float(np.linalg.norm(jacobian(net, x, of)))


def jacobian_spectral(net: DenseNet, x: np.ndarray, of: str = OUTPUT, seed: int = 0) -> float:
    """Largest singular value of the Jacobian via power iteration on J^T J."""
    J = jacobian(net, x, of)
    values, _, _ = spectral_norms(J[None, :, :], seed=seed)
    return float(values[0])


def spectral_norms(
    matrices: np.ndarray, seed: int = 0, tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER
) -> tuple[np.ndarray, np.ndarray, int]:
    """Spectral norms of a batch of matrices, shape (n, r, d)."""
    matrices = np.asarray(matrices, dtype=np.float64)
    grams = np.einsum("nri,nrj->nij", matrices, matrices)
    values, converged, iterations = power_iteration(grams, seed=seed, tol=tol, max_iter=max_iter)
    return np.sqrt(np.maximum(values, 0.0)), converged, iterations


def power_iteration(
    grams: np.ndarray, seed: int = 0, tol: float = POWER_TOL, max_iter: int = POWER_MAX_ITER
) -> tuple[np.ndarray, np.ndarray, int]:
    """Largest eigenvalue of symmetric PSD matrices by power iteration.

    Accepts one (d, d) matrix or a batch (n, d, d). Iteration stops per matrix
    once successive Rayleigh quotients agree to relative ``tol``; matrices
    still running after ``max_iter`` keep their last iterate and a warning is
    logged.

    :param grams: The matrix or batch of matrices.
    :param seed: Seed of the start vectors.
    :return: (eigenvalues, converged flags, iterations used).
    """
    grams = np.asarray(grams, dtype=np.float64)
    single = grams.ndim == 2
    if single:
        grams = grams[None, :, :]
    n, d, _ = grams.shape

    v = stream(seed, Stream.PROBE, 0).standard_normal(size=(n, d))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    values = np.zeros(n)
    converged = np.zeros(n, dtype=bool)
    active = np.ones(n, dtype=bool)

    iterations = 0
    while iterations < max_iter and np.any(active):
        iterations += 1
        u = np.einsum("nij,nj->ni", grams[active], v[active])
        rayleigh = np.einsum("ni,ni->n", v[active], u)
        norm = np.linalg.norm(u, axis=1)

        vanished = norm == 0.0
        done = vanished | (np.abs(rayleigh - values[active]) <= tol * np.abs(rayleigh))
        idx = np.flatnonzero(active)
        values[idx] = np.where(vanished, 0.0, rayleigh)
        moving = ~vanished
        v[idx[moving]] = u[moving] / norm[moving, None]
        converged[idx[done]] = True
        active[idx[done]] = False

    if np.any(active):
        logger.warning(
            f"Power iteration did not converge for {int(np.count_nonzero(active))} of {n} "
            f"matrices within {max_iter} iterations; using the last iterate"
        )
    if single:
        return values[:1], converged[:1], iterations
    return values, converged, iterations


def feature_penalty(net: DenseNet, X: np.ndarray) -> np.ndarray:
    """Per-sample ||d phi_P / dx||_F."""
    chain = jacobian_chain(net, X)
    return np.linalg.norm(chain.features, axis=(1, 2))


def feature_penalty_grad(net: DenseNet, X: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    """Mean ||d phi_P / dx||_F over the rows of X and its gradient w.r.t. the weights.

    Differentiates through both the Jacobian chain and the activation
    derivatives sigma'(z_k) (double backpropagation). Piecewise-linear
    activations have sigma'' = 0, so their pattern acts as locally constant.
    The output layer receives a zero gradient.

    :return: (per-sample penalties, gradients matching ``net.weights``).
    """
    chain = jacobian_chain(net, X)
    trace = chain.trace
    n = X.shape[0]
    J_P = chain.features
    norms = np.linalg.norm(J_P, axis=(1, 2))

    safe = np.where(norms > 0.0, norms, 1.0)
    G = np.where((norms > 0.0)[:, None, None], J_P / safe[:, None, None], 0.0) / n
    g_phi = np.zeros_like(trace.phis[-1])

    P = net.spec.depth
    grads = [np.zeros_like(w) for w in net.weights]
    for k in range(P, 0, -1):
        w = net.weights[k - 1]
        activation = net.spec.hidden[k - 1].activation
        z = trace.preactivations[k - 1]
        first = activation.derivative(z)
        second = activation.second_derivative(z)

        M = chain.products[k]
        s = np.sum(G * M, axis=2)
        g_z = g_phi * first + s * second
        G_M = first[:, :, None] * G

        grads[k - 1] = (
            np.einsum("ni,nj->ij", trace.phis[k - 1], g_z)
            + np.einsum("nid,njd->ij", chain.jacobians[k - 1], G_M)
        )
        g_phi = g_z @ w.T
        G = np.einsum("ij,njd->nid", w, G_M)
    return norms, grads
