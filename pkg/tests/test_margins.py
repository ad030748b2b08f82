import math

import numpy as np
import pytest

from capbound.margins.estimators import (
    MISCLASSIFIED,
    NO_CROSSING,
    ON_BOUNDARY,
    certify,
    first_crossing,
    input_margin_certificate,
    input_margin_upper,
    margin_report,
    output_margin,
    output_margins,
    ray_search,
)
from capbound.margins.margin_report import RobustConfig
from capbound.margins.trainer import Schedule, train
from capbound.net_engine.dataset import Dataset, sample_ball, two_moons
from capbound.net_engine.dense_net import DenseNet, init_net
from capbound.net_engine.rng import Stream, stream
from helpers import linear_net, mlp


def config(spec, radius=1.0, **fields):
    return RobustConfig.create(spec, fields.pop("noise_radius", 0.0), radius, **fields)


class TestRobustConfig:
    def test_penalty_weight_is_c_times_output_cap(self):
        cfg = RobustConfig.create(mlp(2, output_max_norm=3.0), 0.25, radius=1.0)
        assert cfg.penalty_weight == 0.75

    def test_default_tolerance_and_search_radius(self):
        cfg = config(mlp(2), radius=2.0)
        assert cfg.tol == pytest.approx(2e-6)
        assert cfg.search_radius == 8.0

    @pytest.mark.parametrize("noise, radius", [(-0.1, 1.0), (0.1, 0.0)])
    def test_invalid_settings(self, noise, radius):
        with pytest.raises(ValueError):
            RobustConfig.create(mlp(2), noise, radius)


class TestOutputMargin:
    def test_point_to_hyperplane_distance(self):
        assert output_margin(linear_net([3.0, 4.0]), np.array([1.0, 0.0])) == pytest.approx(0.6)

    def test_on_the_hyperplane(self):
        assert output_margin(linear_net([3.0, 4.0]), np.array([4.0, -3.0])) == 0.0

    def test_invariant_to_scaling_the_output_vector(self):
        x = np.array([0.3, -0.7])
        assert output_margin(linear_net([2.0, 1.0]), x) == pytest.approx(
            output_margin(linear_net([6.0, 3.0]), x), rel=1e-14
        )

    def test_zero_output_vector(self):
        with pytest.raises(ValueError):
            output_margin(linear_net([0.0, 0.0]), np.array([1.0, 0.0]))

    def test_vectorized_form(self):
        net = linear_net([3.0, 4.0])
        X = np.array([[1.0, 0.0], [0.0, 1.0]])
        assert np.allclose(output_margins(net, X), [0.6, 0.8])


class TestInputMarginUpper:
    def test_linear_distance(self):
        net = linear_net([1.0, 0.0])
        radius = 8.0
        upper = input_margin_upper(net, np.array([0.5, 7.0]), radius)
        assert 0.5 <= upper <= 0.5 + 1e-6 * radius

    def test_halving_tol_halves_the_bracket(self):
        net = linear_net([1.0, 2.0])
        x = np.array([0.4, 0.1])
        coarse = ray_search(net, x, 1.0, tol=1e-3)
        fine = ray_search(net, x, 1.0, tol=5e-4)
        assert coarse.upper - coarse.lower <= 1e-3
        assert fine.upper - fine.lower <= 5e-4
        assert fine.lower <= fine.upper

    def test_relu_net_in_a_linear_region(self):
        # both units stay active along the ray, so the net acts as x -> x1 - x2 up to the boundary
        spec = mlp(2, widths=(2,), max_norm=2.0, output_max_norm=2.0)
        net = DenseNet(spec, (np.eye(2), np.array([[1.0], [-1.0]])))
        upper = input_margin_upper(net, np.array([0.3, 0.1]), 1.0)
        assert upper == pytest.approx(0.2 / math.sqrt(2.0), abs=1e-5)

    def test_boundary_point(self):
        assert input_margin_upper(linear_net([1.0, 0.0]), np.array([0.0, 1.0]), 1.0) == 0.0
        assert ray_search(linear_net([1.0, 0.0]), np.array([0.0, 1.0]), 1.0).flag == ON_BOUNDARY

    def test_no_sign_change_within_the_search_radius(self):
        search = ray_search(linear_net([1.0, 0.0]), np.array([10.0, 0.0]), 1.0)
        assert search.flag == NO_CROSSING
        assert not search.found
        assert input_margin_upper(linear_net([1.0, 0.0]), np.array([10.0, 0.0]), 1.0) == math.inf


class TestFirstCrossing:
    def test_root_of_a_line(self):
        lower, upper = first_crossing(lambda t: 1.0 - t, 1.0, 4.0, 1e-9)
        assert lower < 1.0 <= upper
        assert upper - lower <= 1e-9

    def test_no_root(self):
        assert first_crossing(lambda t: 1.0 + t, 1.0, 4.0, 1e-6) is None

    def test_narrow_dip_between_scan_points(self):
        # below zero only within 5e-4 of 1.0078, far narrower than the 4/256 scan step
        def scores(t):
            return np.minimum(-0.01 + 20.0 * np.abs(t - 1.0078), 3.0 - t)

        lower, upper = first_crossing(scores, 3.0, 4.0, 1e-9)
        assert upper == pytest.approx(1.0078 - 5e-4, abs=1e-8)
        assert scores(np.array([lower]))[0] > 0.0
        assert scores(np.array([upper]))[0] <= 0.0

    def test_dip_that_stays_positive(self):
        def scores(t):
            return np.minimum(0.01 + 20.0 * np.abs(t - 1.0078), 3.0 - t)

        lower, upper = first_crossing(scores, 3.0, 4.0, 1e-9)
        assert upper == pytest.approx(3.0, abs=1e-8)


class TestCertificate:
    def test_linear_certificate_is_exact(self):
        net = linear_net([1.0, -2.0], output_max_norm=3.0)
        cfg = config(net.spec, ball_samples=16)
        x = np.array([0.5, -0.1])
        exact = abs(net.output_weights @ x) / np.linalg.norm(net.output_weights)
        certificate = certify(net, x, cfg)
        assert certificate.value == pytest.approx(exact, rel=1e-12)
        assert certificate.jacobian_sup == pytest.approx(1.0, rel=1e-12)
        assert abs(certificate.search.upper - certificate.value) <= cfg.tol + 1e-12

    def test_certificate_never_exceeds_the_upper_estimate(self):
        dataset = two_moons(20, 0)
        spec = mlp(3, widths=(6, 6), activation="tanh", max_norm=2.0, output_max_norm=2.0)
        net = train(init_net(spec, 0), dataset, Schedule(epochs=30, lr=0.1, batch_size=5), log_every=0).net
        cfg = config(spec, ball_samples=32)
        for x in dataset.samples:
            search = ray_search(net, x, cfg.radius, cfg.tol)
            assert input_margin_certificate(net, x, cfg) <= search.upper + cfg.tol

    def test_relu_certificate_never_exceeds_the_upper_estimate(self):
        spec = mlp(2, widths=(8,), max_norm=2.0, output_max_norm=2.0)
        net = init_net(spec, 7)
        cfg = config(spec, ball_samples=32)
        for x in sample_ball(stream(0, Stream.DATA), 10, 2, 1.0):
            certificate = certify(net, x, cfg)
            assert certificate.value <= certificate.search.upper + cfg.tol


class TestMarginReport:
    def test_misclassified_sample_is_flagged(self):
        net = linear_net([1.0, 0.0])
        dataset = Dataset(np.array([[1.0, 0.0], [0.5, 0.5]]), np.array([-1.0, 1.0]))
        report = margin_report(net, dataset, config(net.spec, ball_samples=8))
        wrong, right = report.samples
        assert wrong.misclassified
        assert wrong.flags == [MISCLASSIFIED]
        assert wrong.output_margin == wrong.input_margin_upper == wrong.input_margin_certificate == 0.0
        assert not right.misclassified
        assert right.output_margin == pytest.approx(0.5)
        assert report.misclassified_count == 1

    def test_aggregates_skip_misclassified_samples(self):
        net = linear_net([1.0, 0.0])
        dataset = Dataset(np.array([[1.0, 0.0], [0.5, 0.5], [-0.25, 0.0]]), np.array([-1.0, 1.0, -1.0]))
        aggregates = margin_report(net, dataset, config(net.spec, ball_samples=8)).aggregates()
        assert aggregates["samples"] == 3
        assert aggregates["misclassified"] == 1
        assert aggregates["mean_output_margin"] == pytest.approx(0.375)
        assert aggregates["min_output_margin"] == pytest.approx(0.25)

    def test_no_sandwich_violations_on_a_trained_net(self):
        dataset = two_moons(16, 3)
        spec = mlp(3, widths=(5,), max_norm=2.0, output_max_norm=2.0)
        net = train(init_net(spec, 1), dataset, Schedule(epochs=20, lr=0.1, batch_size=4), log_every=0).net
        report = margin_report(net, dataset, config(spec, ball_samples=16))
        assert report.sandwich_violations() == 0
        document = report.to_dict()
        assert len(document["samples"]) == 16
        assert document["ball_samples"] == 16
