import numpy as np
import pytest

from capbound.model_spec.activation import ActivationKind, ActivationName
from capbound.net_engine.dataset import Dataset, sample_ball, two_moons
from capbound.net_engine.dense_net import forward
from capbound.net_engine.rng import Stream, stream
from capbound.oracle.feature_radius import (
    aligned_net,
    feature_radius_check,
    random_feasible_net,
    robust_radius_check,
)
from capbound.oracle.finite_diff import default_inventory, finite_diff_suite, relative_error
from capbound.oracle.lipschitz import lipschitz_check
from capbound.oracle.margin_check import grid_input_margin, margin_inequality_check
from capbound.oracle.oracle_result import OracleResult
from capbound.oracle.probability import label_correlation_exact, mc_label_orthogonality, mc_masked_norm
from capbound.oracle.shattering import shattering_probe
from capbound.oracle.suite import ORACLE_GROUPS, SuiteConfig, run_suite, summarize
from helpers import linear_net, mlp


def ball_dataset(m, dim, radius=1.0, seed=0):
    return Dataset(sample_ball(stream(seed, Stream.DATA), m, dim, radius), np.ones(m))


class TestOracleResult:
    def test_pass_means_within_threshold(self):
        assert OracleResult.create("x", 0.5, 1.0, 1, 0).passed
        assert not OracleResult.create("x", 1.5, 1.0, 1, 0).passed

    def test_nan_fails(self):
        assert not OracleResult.create("x", float("nan"), 1.0, 1, 0).passed

    def test_details_travel_with_the_result(self):
        document = OracleResult.create("x", 0.0, 1.0, 3, 7, statistical=True, note="ok").to_dict()
        assert document["details"] == {"note": "ok"}
        assert document["statistical"] is True
        assert document["seed"] == 7


class TestProbability:
    def test_masked_norm_expectation(self):
        result = mc_masked_norm([1.0, 1.0, 1.0, 1.0], 0.5, trials=20_000, seed=1)
        assert result.passed
        assert result.details["expected"] == 2.0
        assert result.details["estimate"] == pytest.approx(2.0, abs=0.05)

    def test_keep_everything_is_exact(self):
        result = mc_masked_norm([1.0, -2.0, 0.5], 1.0, trials=500)
        assert result.details["estimate"] == 5.25
        assert result.details["sigma"] == 0.0
        assert result.passed

    def test_zero_vector(self):
        result = mc_masked_norm([0.0, 0.0], 0.3, trials=100)
        assert result.details["estimate"] == 0.0
        assert result.passed

    def test_label_orthogonality(self):
        result = mc_label_orthogonality(5, trials=20_000, seed=3)
        assert result.passed
        assert result.details["diagonal_exact"]

    def test_exact_enumeration(self):
        assert np.array_equal(label_correlation_exact(2), np.eye(2))
        correlation = label_correlation_exact(6)
        assert np.all(correlation[~np.eye(6, dtype=bool)] == 0.0)

    def test_enumeration_limit(self):
        with pytest.raises(ValueError):
            label_correlation_exact(13)


class TestLipschitz:
    @pytest.mark.parametrize("name", list(ActivationName))
    def test_own_constant_holds(self, name):
        assert lipschitz_check(ActivationKind(kind=name), trials=4000, seed=0, dim=2).passed

    def test_too_small_sigmoid_constant_is_refuted(self):
        result = lipschitz_check(ActivationKind(kind="sigmoid"), trials=4000, lipschitz=0.2)
        assert not result.passed
        assert "counterexample" in result.details

    def test_tanh_contracts_towards_the_origin(self):
        result = lipschitz_check(ActivationKind(kind="tanh"), trials=2000, dim=3)
        assert result.details["origin_violations"] == 0


class TestFeatureRadius:
    def test_linear_class(self):
        spec = mlp(3)
        assert feature_radius_check(spec, ball_dataset(30, 3), nets=3, radius=1.0).passed

    def test_two_relu_layers_stay_within_four(self, relu_p2_spec):
        result = feature_radius_check(relu_p2_spec, ball_dataset(40, 2), nets=30, radius=1.0)
        assert result.passed
        assert result.details["bound"] == 4.0
        assert result.details["max_ratio"] <= 1.0

    def test_random_nets_are_feasible(self, relu_p2_spec):
        assert all(random_feasible_net(relu_p2_spec, seed).is_feasible() for seed in range(5))

    def test_aligned_net_reaches_the_bound(self, relu_p2_spec):
        net = aligned_net(relu_p2_spec, [1.0, 1.0])
        assert net.is_feasible()
        x = np.array([1.0, 1.0]) / np.sqrt(2.0)
        assert float(np.sum(forward(net, x).features ** 2)) == pytest.approx(4.0, rel=1e-12)

    def test_dropout_expectation(self):
        spec = mlp(2, widths=(3, 3), keep_prob=0.5)
        result = feature_radius_check(spec, ball_dataset(10, 2), nets=5, radius=1.0, dropout=True, mask_trials=100)
        assert result.passed
        assert result.statistical

    def test_declared_radius_must_cover_the_data(self, relu_p2_spec):
        with pytest.raises(ValueError):
            feature_radius_check(relu_p2_spec, ball_dataset(10, 2, radius=2.0, seed=1), nets=1, radius=0.1)


class TestRobustRadius:
    def test_aligned_perturbation_needs_the_triangle_form(self):
        dataset = Dataset(np.array([[1.0, 0.0]]), np.array([1.0]))
        result = robust_radius_check(mlp(2), dataset, c=1.0, nets=2, radius=1.0, perturbations=4)
        assert result.passed
        assert result.details["measured"] == pytest.approx(4.0)
        assert result.details["stated_bound"] == 2.0
        assert not result.details["stated_form_held"]

    def test_zero_noise_is_the_feature_radius(self, relu_p2_spec):
        dataset = ball_dataset(20, 2)
        result = robust_radius_check(relu_p2_spec, dataset, c=0.0, nets=10, radius=1.0, perturbations=2)
        assert result.passed
        assert result.details["sound_bound"] == result.details["stated_bound"] == 4.0

    def test_small_noise(self, relu_p2_spec):
        result = robust_radius_check(relu_p2_spec, ball_dataset(20, 2), c=0.05, nets=10, radius=1.0)
        assert result.passed


class TestShattering:
    def test_two_generic_points_are_shattered_by_a_loose_linear_class(self, unit_data):
        spec = mlp(2, output_max_norm=10.0)
        result = shattering_probe(spec, unit_data, 2, points=np.array([[1.0, 0.0], [0.0, 1.0]]))
        assert result.passed
        assert result.details["shattered"]
        assert result.statistic == 2.0
        assert result.threshold == 100.0

    def test_constrained_class_cannot_realize_one_point(self, unit_data):
        spec = mlp(2, output_max_norm=0.5)
        result = shattering_probe(spec, unit_data, 1, epochs=200, restarts=2, points=np.array([[1.0, 0.0]]))
        assert result.passed
        assert not result.details["shattered"]
        assert result.details["inconclusive"]

    def test_too_many_points(self, unit_data):
        with pytest.raises(ValueError):
            shattering_probe(mlp(2), unit_data, 13)


class TestFiniteDifferences:
    def test_default_inventory_passes(self):
        result = finite_diff_suite(default_inventory(0), probes_per_net=2, seed=0)
        assert result.passed
        assert result.details["worst_relative_error"] <= 1e-2

    def test_linear_gradient_is_exact(self):
        net = linear_net([0.3, -0.7, 0.2])
        result = finite_diff_suite([net], probes_per_net=3, seed=1)
        assert result.passed
        assert result.details["worst_relative_error"] <= 1e-6

    def test_relative_error(self):
        assert relative_error(np.array([1.0, 0.0]), np.array([1.0, 0.0])) == 0.0
        assert relative_error(np.array([2.0]), np.array([1.0])) == 0.5


class TestMarginChecks:
    def test_linear_nets_have_no_violations(self):
        cases = [
            (linear_net([1.0, 0.5]), two_moons(10, 0, append_constant=False)),
            (linear_net([-0.3, 1.0]), two_moons(10, 1, append_constant=False)),
        ]
        result = margin_inequality_check(cases, radius=1.0, ball_samples=8)
        assert result.passed
        assert result.details["max_linear_gap"] <= 1e-5

    def test_grid_margin_of_a_line(self):
        net = linear_net([1.0, 0.0])
        assert grid_input_margin(net, np.array([0.5, 0.3]), 1.0, points=401) == pytest.approx(0.5, abs=0.02)


class TestSuite:
    def test_unknown_group(self, relu_p2_spec, unit_data):
        with pytest.raises(ValueError, match="unknown oracle group"):
            SuiteConfig(relu_p2_spec, unit_data, only=("nope",)).selected()

    def test_groups_run_in_fixed_order(self, relu_p2_spec, unit_data):
        config = SuiteConfig(relu_p2_spec, unit_data, only=("labels", "lipschitz"))
        assert config.selected() == ("lipschitz", "labels")
        assert SuiteConfig(relu_p2_spec, unit_data).selected() == ORACLE_GROUPS

    def test_small_suite_passes(self, relu_p2_spec, unit_data):
        config = SuiteConfig(
            relu_p2_spec,
            unit_data,
            trials=5000,
            nets=10,
            lipschitz_trials=2000,
            mask_cases=3,
            dataset_size=16,
            only=("lipschitz", "masks", "labels", "feature_radius", "robust_radius"),
        )
        results = run_suite(config)
        summary = summarize(results)
        assert summary["failed"] == []
        names = [r.name for r in results]
        assert "lipschitz_refutes[sigmoid, L=0.2]" in names
        assert "feature_radius_aligned" in names

    def test_finite_diff_group_reaches_500_comparisons(self, relu_p2_spec, unit_data):
        (result,) = run_suite(SuiteConfig(relu_p2_spec, unit_data, only=("finite_diff",)))
        assert result.samples >= 500
        assert result.passed

    @pytest.mark.slow
    def test_margin_group_trains_fifty_nets(self, relu_p2_spec, unit_data):
        (result,) = run_suite(SuiteConfig(relu_p2_spec, unit_data, ball_samples=16, only=("margins",)))
        assert result.details["nets"] == 50
        assert result.details["violations"] == 0
        assert result.passed

    @pytest.mark.slow
    def test_shattering_group_covers_three_points_and_a_hidden_layer(self, relu_p2_spec, unit_data):
        results = run_suite(SuiteConfig(relu_p2_spec, unit_data, only=("shattering",)))
        assert all(r.passed for r in results)
        assert max(r.details["m"] for r in results) == 3
        below_one = [r for r in results if r.details["bound"] == pytest.approx(0.5)]
        assert [r.details["m"] for r in below_one] == [1, 2, 3]
        assert not any(r.details["shattered"] for r in below_one)
