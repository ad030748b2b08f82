import math

import numpy as np
import pytest

from capbound.net_engine.dataset import sample_ball
from capbound.net_engine.dense_net import init_net
from capbound.net_engine.jacobian import (
    FEATURES,
    batch_jacobians,
    feature_penalty,
    feature_penalty_grad,
    jacobian,
    jacobian_frobenius,
    jacobian_spectral,
    power_iteration,
    spectral_norms,
)
from capbound.net_engine.rng import Stream, stream
from capbound.oracle.finite_diff import numeric_input_gradient, numeric_weight_gradient, relative_error
from helpers import linear_net


class TestJacobian:
    def test_linear_region_by_hand(self, identity_relu_net):
        J = jacobian(identity_relu_net, np.array([1.0, 1.0]))
        assert J.shape == (1, 2)
        assert J[0].tolist() == [1.0, 1.0]
        assert jacobian_frobenius(identity_relu_net, np.array([1.0, 1.0])) == pytest.approx(math.sqrt(2.0))

    def test_linear_net_has_constant_jacobian(self):
        net = linear_net([0.3, -0.4, 1.2], output_max_norm=2.0)
        for x in (np.zeros(3), np.array([5.0, -1.0, 2.0])):
            assert np.array_equal(jacobian(net, x)[0], net.output_weights)
            assert np.array_equal(jacobian(net, x, FEATURES), np.eye(3))

    def test_features_jacobian_shape(self, tanh_spec):
        net = init_net(tanh_spec, 0)
        assert jacobian(net, np.array([0.1, 0.2, 0.3]), FEATURES).shape == (3, 3)

    def test_matches_central_differences(self, tanh_spec):
        net = init_net(tanh_spec, 1)
        for x in sample_ball(stream(0, Stream.DATA), 5, 3, 1.0):
            assert relative_error(jacobian(net, x)[0], numeric_input_gradient(net, x)) <= 1e-4

    def test_unknown_target(self, identity_relu_net):
        with pytest.raises(ValueError):
            batch_jacobians(identity_relu_net, np.ones((1, 2)), of="hidden")


class TestNorms:
    def test_rank_one_norms_agree(self, identity_relu_net):
        x = np.array([1.0, 1.0])
        assert jacobian_spectral(identity_relu_net, x) == pytest.approx(math.sqrt(2.0), rel=1e-9)

    def test_zero_matrix(self):
        values, converged, _ = spectral_norms(np.zeros((1, 2, 3)))
        assert values[0] == 0.0
        assert converged[0]

    def test_spectral_never_exceeds_frobenius(self, tanh_spec):
        net = init_net(tanh_spec, 2)
        for x in sample_ball(stream(1, Stream.DATA), 10, 3, 1.0):
            J = jacobian(net, x, FEATURES)
            assert jacobian_spectral(net, x, FEATURES) <= np.linalg.norm(J) * (1.0 + 1e-12)

    def test_power_iteration_matches_eigvalsh(self):
        rng = stream(3, Stream.PROBE)
        A = rng.standard_normal((4, 6, 5))
        grams = np.einsum("nri,nrj->nij", A, A)
        values, converged, _ = power_iteration(grams)
        assert np.all(converged)
        assert np.allclose(values, np.linalg.eigvalsh(grams)[:, -1], rtol=1e-6)

    def test_iteration_cap_is_reported(self):
        grams = np.diag([1.0, 0.999999])[None, :, :]
        _, converged, iterations = power_iteration(grams, tol=0.0, max_iter=3)
        assert iterations == 3
        assert not converged[0]


class TestFeaturePenalty:
    def test_linear_net_penalty_is_sqrt_d(self):
        net = linear_net([1.0, 0.0, 0.0, 0.0])
        assert np.allclose(feature_penalty(net, np.ones((3, 4))), 2.0)

    def test_gradient_matches_central_differences(self, tanh_spec):
        net = init_net(tanh_spec, 4)
        X = sample_ball(stream(2, Stream.DATA), 4, 3, 1.0)
        _, analytic = feature_penalty_grad(net, X)
        numeric = numeric_weight_gradient(net, lambda candidate: float(np.mean(feature_penalty(candidate, X))))
        flat_analytic = np.concatenate([g.reshape(-1) for g in analytic])
        flat_numeric = np.concatenate([g.reshape(-1) for g in numeric])
        assert relative_error(flat_analytic, flat_numeric) <= 1e-4

    def test_output_layer_gets_no_gradient(self, tanh_spec):
        net = init_net(tanh_spec, 4)
        _, grads = feature_penalty_grad(net, np.full((2, 3), 0.2))
        assert np.all(grads[-1] == 0.0)
