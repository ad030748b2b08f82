from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from pydantic import ValidationError

from capbound.capacity.bound_report import BoundPreconditionError
from capbound.capacity.bounds import all_bounds, capacity_profile, sample_complexity_ratio
from capbound.cli import settings
from capbound.cli.reports import envelope, write_history, write_report
from capbound.margins.estimators import margin_report
from capbound.margins.margin_report import RobustConfig
from capbound.margins.trainer import Objective, Schedule, TrainingDivergedError, train
from capbound.model_spec.errors import SpecError
from capbound.model_spec.network_spec import DataStats, NetworkSpec
from capbound.model_spec.parsing import SpecDocument, load_spec_document, spec_hash
from capbound.model_spec.validation import issues_from_validation_error
from capbound.net_engine.dataset import Dataset, DatasetError, load_csv
from capbound.net_engine.dense_net import init_net
from capbound.net_engine.masks import MaskPolicy
from capbound.oracle.suite import SuiteConfig, run_suite, summarize
from capbound.persistence.model_store import ModelFileError, load_model, save_model

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_COMPUTATION = 1
EXIT_CONFIG = 2

DEMO_SPEC = Path(__file__).resolve().parents[2] / "demo" / "relu_p2.yaml"


class ConfigError(ValueError):
    """Raised when the command configuration cannot be used (missing paths, bad values)."""
    pass


@dataclass(frozen=True)
class RunConfig:
    """Everything a command needs, collected from the command line before any work starts."""

    command: str
    spec_path: Optional[str] = None
    dataset_path: Optional[str] = None
    model_path: Optional[str] = None
    history_path: Optional[str] = None
    output: Optional[str] = None
    format: str = "json"
    seed: Optional[int] = None
    radius: Optional[float] = None
    robust: Optional[float] = None
    profile: int = 0
    epochs: int = 200
    lr: float = 0.05
    batch_size: int = 16
    objective: str = "hinge"
    c: Optional[float] = None
    mask_policy: str = "none"
    margin_every: int = 0
    ball_samples: Optional[int] = None
    trials: Optional[int] = None
    nets: Optional[int] = None
    only: Optional[tuple[str, ...]] = None

    @classmethod
    def from_args(cls, args) -> "RunConfig":
        fields = {name: getattr(args, name) for name in cls.__dataclass_fields__ if hasattr(args, name)}
        if fields.get("only"):
            fields["only"] = tuple(fields["only"])
        return cls(**fields)


def run(config: RunConfig) -> int:
    """Dispatches a command and maps library errors onto exit codes."""
    handlers = {"bound": cmd_bound, "train": cmd_train, "margins": cmd_margins, "verify": cmd_verify}
    try:
        return handlers[config.command](config)
    except (SpecError, DatasetError, ModelFileError, ConfigError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except BoundPreconditionError as e:
        logger.error(f"Bound preconditions violated: {e}")
        return EXIT_COMPUTATION


def cmd_bound(config: RunConfig) -> int:
    """Evaluates every applicable VC bound for the spec and writes the report."""
    document = _load_spec(config.spec_path)
    data = _data_stats(document, config.radius)
    seed = settings.resolve_seed(config.seed)

    reports = all_bounds(document.spec, data, robust_c=config.robust)
    payload = {"data": data.model_dump(), "bounds": [report.to_dict() for report in reports]}
    if not document.is_resnet:
        payload["sample_complexity_ratio"] = sample_complexity_ratio(document.spec)
        if config.profile > 0:
            payload["capacity_profile"] = capacity_profile(document.spec, data, config.profile)

    rows = [
        {
            "theorem": report.theorem.value,
            "value": report.value,
            "value_floor": report.value_floor,
            "saturated": report.saturated,
            "factors": " * ".join(f"{label}={factor!r}" for label, factor in report.factors),
        }
        for report in reports
    ]
    report = envelope("bound", spec_hash(document.spec), seed, **payload)
    write_report(config.output, report, rows, config.format, "VC bounds")
    return EXIT_OK


def cmd_train(config: RunConfig) -> int:
    """Trains a net for the spec on a CSV dataset; writes the model, the history and a summary."""
    document = _load_spec(config.spec_path)
    if document.is_resnet:
        raise ConfigError("only MLP specs can be trained")
    spec: NetworkSpec = document.spec
    dataset = _load_dataset(config.dataset_path, spec.input_dim)
    if config.model_path is None:
        raise ConfigError("train needs --model for the output model file")
    try:
        objective = Objective.from_keyword(config.objective)
        mask_policy = MaskPolicy.from_keyword(config.mask_policy)
        seed = settings.resolve_seed(config.seed)
        schedule = Schedule(config.epochs, config.lr, config.batch_size, seed)
    except ValueError as e:
        raise ConfigError(str(e))

    data = _checked_radius(document, dataset, config.radius)
    c = config.c if config.c is not None else data.noise_radius
    robust = None
    if objective == Objective.ROBUST or config.margin_every > 0:
        robust = _robust_config(spec, c, data.radius, config, seed)

    history_path = config.history_path or str(Path(config.model_path).with_suffix(".history.csv"))
    metadata = {
        "seed": seed,
        "epochs": schedule.epochs,
        "lr": schedule.lr,
        "batch_size": schedule.batch_size,
        "objective": objective.value,
        "mask_policy": mask_policy.value,
        "noise_radius": c,
        "radius": data.radius,
    }

    net = init_net(spec, seed)
    try:
        result = train(
            net,
            dataset,
            schedule,
            objective,
            mask_policy,
            robust,
            config.margin_every,
            settings.LOG_EVERY,
        )
    except TrainingDivergedError as e:
        save_model(config.model_path, e.checkpoint, {**metadata, "diverged_at_epoch": e.epoch})
        write_history(history_path, [row.to_dict() for row in e.history])
        logger.error(f"{e}; last finite checkpoint saved to {config.model_path}")
        return EXIT_COMPUTATION

    save_model(config.model_path, result.net, metadata)
    rows = [row.to_dict() for row in result.history]
    write_history(history_path, rows)

    final = rows[-1]
    report = envelope(
        "train",
        spec_hash(spec),
        seed,
        model=config.model_path,
        history=history_path,
        final=final,
        margins={epoch: r.aggregates() for epoch, r in result.margin_reports.items()},
    )
    write_report(config.output, report, [final], config.format, "Training summary")
    return EXIT_OK


def cmd_margins(config: RunConfig) -> int:
    """Per-sample margins of a saved model on a dataset."""
    if config.model_path is None:
        raise ConfigError("margins needs --model")
    net, metadata = load_model(config.model_path)
    dataset = _load_dataset(config.dataset_path, net.spec.input_dim)
    seed = settings.resolve_seed(config.seed)

    radius = config.radius or metadata.get("radius") or dataset.radius()
    radius = max(float(radius), dataset.radius())
    c = config.c if config.c is not None else float(metadata.get("noise_radius", 0.0))
    cfg = _robust_config(net.spec, c, radius, config, seed)

    report = margin_report(net, dataset, cfg)
    document = envelope(
        "margins",
        spec_hash(net.spec),
        seed,
        certificate="sampled",
        **report.to_dict(),
    )
    rows = [sample.to_dict() for sample in report.samples]
    write_report(config.output, document, rows, config.format, "Margin report")
    return EXIT_OK


def cmd_verify(config: RunConfig) -> int:
    """Runs the oracle suite; exits 1 if any oracle fails."""
    spec_path = config.spec_path or str(DEMO_SPEC)
    document = _load_spec(spec_path)
    if document.is_resnet:
        raise ConfigError("the oracle suite needs an MLP spec")
    data = _data_stats(document, config.radius)
    seed = settings.resolve_seed(config.seed)

    suite = SuiteConfig(
        spec=document.spec,
        data=data,
        seed=seed,
        trials=config.trials or settings.TRIALS,
        nets=config.nets or settings.NETS,
        ball_samples=_ball_samples(config),
        only=config.only,
    )
    try:
        suite.selected()
    except ValueError as e:
        raise ConfigError(str(e))

    results = run_suite(suite)
    report = envelope(
        "verify",
        spec_hash(document.spec),
        seed,
        summary=summarize(results),
        oracles=[result.to_dict() for result in results],
    )
    rows = [
        {k: v for k, v in result.to_dict().items() if k != "details"} for result in results
    ]
    write_report(config.output, report, rows, config.format, "Oracle suite")
    return EXIT_OK if all(result.passed for result in results) else EXIT_COMPUTATION


def _load_spec(path: Optional[str]) -> SpecDocument:
    if path is None:
        raise ConfigError("a spec file is required (--spec)")
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read spec file {path}: {e}")
    except UnicodeDecodeError as e:
        raise ConfigError(f"spec file {path} is not valid UTF-8: {e}")
    document = load_spec_document(text)
    logger.info(f"Loaded {'resnet' if document.is_resnet else 'MLP'} spec from {path}")
    return document


def _load_dataset(path: Optional[str], input_dim: int) -> Dataset:
    if path is None:
        raise ConfigError("a dataset file is required (--data)")
    if not Path(path).is_file():
        raise ConfigError(f"dataset file not found: {path}")
    return load_csv(path, expected_dim=input_dim)


def _data_stats(document: SpecDocument, radius: Optional[float]) -> DataStats:
    if radius is not None:
        noise = document.data.noise_radius if document.data is not None else 0.0
        return _stats(radius=radius, noise_radius=noise)
    if document.data is None:
        raise ConfigError("no data radius: add a 'data' section to the spec or pass --radius")
    return document.data


def _stats(**fields) -> DataStats:
    try:
        return DataStats.model_validate(fields)
    except ValidationError as e:
        issues = "; ".join(str(issue) for issue in issues_from_validation_error(e))
        raise ConfigError(f"invalid data statistics: {issues}")


def _checked_radius(document: SpecDocument, dataset: Dataset, radius: Optional[float]) -> DataStats:
    measured = dataset.radius()
    if radius is None and document.data is None:
        return _stats(radius=measured)
    declared = _data_stats(document, radius)
    if measured > declared.radius:
        logger.warning(
            f"Measured dataset radius {measured:.6g} exceeds the declared R = {declared.radius:.6g}; "
            "using the measured radius"
        )
        return _stats(radius=measured, noise_radius=declared.noise_radius)
    return declared


def _ball_samples(config: RunConfig) -> int:
    return config.ball_samples or settings.BALL_SAMPLES


def _robust_config(spec: NetworkSpec, c: float, radius: float, config: RunConfig, seed: int) -> RobustConfig:
    try:
        return RobustConfig.create(spec, c, radius, _ball_samples(config), seed=seed)
    except ValueError as e:
        raise ConfigError(str(e))
