from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from capbound.margins.trainer import Schedule, train
from capbound.model_spec.activation import ActivationKind, ActivationName
from capbound.model_spec.network_spec import DataStats, LayerSpec, NetworkSpec
from capbound.capacity.bounds import feature_radius_bound
from capbound.net_engine.dataset import Dataset, sample_ball, two_moons
from capbound.net_engine.dense_net import forward, init_net
from capbound.net_engine.rng import Stream, stream
from capbound.oracle.feature_radius import aligned_net, feature_radius_check, robust_radius_check
from capbound.oracle.finite_diff import COMPARISONS_PER_PROBE, default_inventory, finite_diff_suite
from capbound.oracle.lipschitz import LIPSCHITZ_SLACK, lipschitz_check
from capbound.oracle.margin_check import margin_inequality_check
from capbound.oracle.oracle_result import OracleResult
from capbound.oracle.probability import mc_label_orthogonality, mc_masked_norm
from capbound.oracle.shattering import shattering_probe

logger = logging.getLogger(__name__)

ORACLE_GROUPS = (
    "lipschitz",
    "masks",
    "labels",
    "feature_radius",
    "robust_radius",
    "finite_diff",
    "margins",
    "shattering",
)
WRONG_SIGMOID_CONSTANT = 0.2
FINITE_DIFF_COMPARISONS = 500
MARGIN_NETS = 50


@dataclass(frozen=True)
class SuiteConfig:
    spec: NetworkSpec
    data: DataStats
    seed: int = 0
    trials: int = 100_000
    nets: int = 200
    ball_samples: int = 256
    lipschitz_trials: int = 10_000
    mask_cases: int = 20
    dataset_size: int = 64
    only: Optional[tuple[str, ...]] = None

    def selected(self) -> tuple[str, ...]:
        if not self.only:
            return ORACLE_GROUPS
        unknown = [group for group in self.only if group not in ORACLE_GROUPS]
        if unknown:
            raise ValueError(f"unknown oracle group(s) {', '.join(unknown)}; expected {', '.join(ORACLE_GROUPS)}")
        return tuple(group for group in ORACLE_GROUPS if group in self.only)


def run_suite(config: SuiteConfig) -> list[OracleResult]:
    """Runs the selected oracle groups in a fixed order."""
    runners = {
        "lipschitz": _lipschitz,
        "masks": _masks,
        "labels": _labels,
        "feature_radius": _feature_radius,
        "robust_radius": _robust_radius,
        "finite_diff": _finite_diff,
        "margins": _margins,
        "shattering": _shattering,
    }
    results = []
    for group in config.selected():
        logger.info(f"Running oracle group '{group}'")
        results.extend(runners[group](config))
    failed = [r.name for r in results if not r.passed]
    logger.info(f"Oracle suite finished: {len(results) - len(failed)} of {len(results)} passed")
    return results


def _lipschitz(config: SuiteConfig) -> list[OracleResult]:
    results = [
        lipschitz_check(ActivationKind(kind=name), config.lipschitz_trials, config.seed)
        for name in ActivationName
    ]
    wrong = lipschitz_check(
        ActivationKind(kind=ActivationName.SIGMOID),
        config.lipschitz_trials,
        config.seed,
        lipschitz=WRONG_SIGMOID_CONSTANT,
    )
    refuted = wrong.statistic > LIPSCHITZ_SLACK
    results.append(
        OracleResult.create(
            f"lipschitz_refutes[sigmoid, L={WRONG_SIGMOID_CONSTANT}]",
            0.0 if refuted else 1.0,
            0.0,
            wrong.samples,
            config.seed,
            counterexample=wrong.details.get("counterexample"),
            excess=wrong.statistic,
        )
    )
    return results


def _masks(config: SuiteConfig) -> list[OracleResult]:
    rng = stream(config.seed, Stream.DATA, 60)
    results = []
    for case in range(config.mask_cases):
        v = rng.standard_normal(int(rng.integers(1, 9)))
        p = float(rng.uniform(0.05, 1.0))
        results.append(mc_masked_norm(v, p, config.trials, seed=config.seed + case))
    return results


def _labels(config: SuiteConfig) -> list[OracleResult]:
    return [mc_label_orthogonality(8, config.trials, config.seed)]


def _ball_dataset(config: SuiteConfig) -> Dataset:
    rng = stream(config.seed, Stream.DATA, 61)
    samples = sample_ball(rng, config.dataset_size, config.spec.input_dim, config.data.radius)
    return Dataset(samples, np.ones(config.dataset_size))


def _feature_radius(config: SuiteConfig) -> list[OracleResult]:
    dataset = _ball_dataset(config)
    results = [
        feature_radius_check(config.spec, dataset, config.nets, config.seed, config.data.radius),
        feature_radius_check(config.spec, dataset, config.nets, config.seed, config.data.radius, dropout=True),
    ]
    if all(layer.activation.kind == ActivationName.RELU for layer in config.spec.hidden):
        results.append(_aligned(config))
    return results


def _aligned(config: SuiteConfig) -> OracleResult:
    direction = np.ones(config.spec.input_dim)
    x = config.data.radius * direction / np.linalg.norm(direction)
    measured = float(np.sum(forward(aligned_net(config.spec, direction), x).features ** 2))
    bound = feature_radius_bound(config.spec, config.data)
    return OracleResult.create(
        "feature_radius_aligned",
        measured - bound,
        1e-12 * max(1.0, bound),
        1,
        None,
        measured=measured,
        bound=bound,
        ratio=measured / bound,
    )


def _robust_radius(config: SuiteConfig) -> list[OracleResult]:
    c = config.data.noise_radius if config.data.noise_radius > 0.0 else 0.5 * config.data.radius
    return [robust_radius_check(config.spec, _ball_dataset(config), c, config.nets, config.seed, config.data.radius)]


def _finite_diff(config: SuiteConfig) -> list[OracleResult]:
    nets = default_inventory(config.seed)
    probes = math.ceil(FINITE_DIFF_COMPARISONS / (COMPARISONS_PER_PROBE * len(nets)))
    return [finite_diff_suite(nets, probes_per_net=probes, seed=config.seed)]


def _margin_specs() -> list[NetworkSpec]:
    def hidden(*widths: int, activation: str) -> tuple[LayerSpec, ...]:
        return tuple(LayerSpec(width=w, activation=activation, max_norm=2.0) for w in widths)

    return [
        NetworkSpec(input_dim=2, output_max_norm=5.0),
        NetworkSpec(input_dim=2, hidden=hidden(8, activation="relu"), output_max_norm=2.0),
        NetworkSpec(input_dim=2, hidden=hidden(6, activation="tanh"), output_max_norm=2.0),
        NetworkSpec(input_dim=2, hidden=hidden(6, 4, activation="relu"), output_max_norm=2.0),
        NetworkSpec(input_dim=2, hidden=hidden(6, 4, activation="tanh"), output_max_norm=2.0),
    ]


def _margins(config: SuiteConfig) -> list[OracleResult]:
    """Margin sandwich over MARGIN_NETS nets trained on two-moons draws, cycling through five specs."""
    specs = _margin_specs()
    cases = []
    for index in range(MARGIN_NETS):
        spec = specs[index % len(specs)]
        seed = config.seed + index
        dataset = two_moons(40, seed, radius=1.0, append_constant=False)
        schedule = Schedule(epochs=100, lr=0.05, batch_size=10, seed=seed)
        cases.append((train(init_net(spec, seed), dataset, schedule, log_every=0).net, dataset))
    return [margin_inequality_check(cases, radius=1.0, ball_samples=config.ball_samples, seed=config.seed)]


def _shattering(config: SuiteConfig) -> list[OracleResult]:
    unit = DataStats(radius=1.0)
    linear = NetworkSpec(input_dim=2, output_max_norm=10.0)
    one_hidden = NetworkSpec(
        input_dim=2, hidden=(LayerSpec(width=4, activation="relu", max_norm=2.0),), output_max_norm=3.0
    )
    # bound 2 * 0.5^2 * 1^2 = 0.5: not even one point may be shattered
    below_one = NetworkSpec(
        input_dim=2, hidden=(LayerSpec(width=2, activation="relu", max_norm=0.5),), output_max_norm=1.0
    )
    constrained = NetworkSpec(input_dim=2, output_max_norm=0.5)
    angles = 2.0 * math.pi * np.arange(3) / 3.0
    triangle = np.column_stack([np.cos(angles), np.sin(angles)])
    results = []
    for spec in (linear, one_hidden, below_one):
        for m in (1, 2, 3):
            results.append(shattering_probe(spec, unit, m, config.seed, points=triangle[:m]))
    results.append(shattering_probe(constrained, unit, 1, config.seed, points=triangle[:1]))
    return results


def summarize(results: Sequence[OracleResult]) -> dict:
    return {
        "total": len(results),
        "passed": sum(1 for r in results if r.passed),
        "failed": [r.name for r in results if not r.passed],
    }
