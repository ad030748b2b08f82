import numpy as np
import pytest

from capbound.model_spec.network_spec import DataStats
from capbound.net_engine.dataset import Dataset
from capbound.net_engine.dense_net import DenseNet
from helpers import mlp


@pytest.fixture
def unit_data():
    return DataStats(radius=1.0)


@pytest.fixture
def relu_p2_spec():
    return mlp(2, widths=(2, 2))


@pytest.fixture
def identity_relu_net():
    """W_1 = I_2, w_2 = (1, 1) on one relu layer."""
    spec = mlp(2, widths=(2,), max_norm=2.0, output_max_norm=2.0)
    return DenseNet(spec, (np.eye(2), np.array([[1.0], [1.0]])))


@pytest.fixture
def tanh_spec():
    return mlp(3, widths=(4, 3), activation="tanh", max_norm=2.0, output_max_norm=2.0)


@pytest.fixture
def two_points():
    return Dataset(np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([1.0, -1.0]))
