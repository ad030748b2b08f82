import numpy as np

from capbound.model_spec.network_spec import LayerSpec, NetworkSpec
from capbound.net_engine.dense_net import DenseNet


def mlp(input_dim, widths=(), activation="relu", max_norm=1.0, output_max_norm=1.0, **layer_fields):
    """Uniform MLP spec: one hidden layer per entry of ``widths``."""
    hidden = tuple(
        LayerSpec(width=w, activation=activation, max_norm=max_norm, **layer_fields) for w in widths
    )
    return NetworkSpec(input_dim=input_dim, hidden=hidden, output_max_norm=output_max_norm)


def linear_net(w, output_max_norm=None):
    """P = 0 net with output vector w."""
    w = np.asarray(w, dtype=np.float64)
    cap = output_max_norm if output_max_norm is not None else max(1.0, float(np.linalg.norm(w)))
    return DenseNet(NetworkSpec(input_dim=w.shape[0], output_max_norm=cap), (w[:, None],))
