from __future__ import annotations

import enum
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from capbound.margins.estimators import margin_report, output_margins
from capbound.margins.margin_report import MarginReport, RobustConfig
from capbound.margins.robust import robust_objective_grad
from capbound.net_engine.dataset import Dataset
from capbound.net_engine.dense_net import DenseNet, forward_batch
from capbound.net_engine.jacobian import feature_penalty
from capbound.net_engine.losses import grad_hinge, hinge_losses
from capbound.net_engine.masks import MaskPolicy
from capbound.net_engine.rng import Stream, stream
from capbound.net_engine.training_step import sgd_step

logger = logging.getLogger(__name__)


class Objective(enum.Enum):
    HINGE = "hinge"
    ROBUST = "robust"

    @classmethod
    def from_keyword(cls, keyword: str) -> "Objective":
        try:
            return cls(keyword.strip().lower())
        except ValueError:
            raise ValueError(f"unknown objective '{keyword}', expected 'hinge' or 'robust'")


class TrainingDivergedError(RuntimeError):
    """Raised when the loss or the weights stop being finite.

    Carries the last net whose epoch finished with finite values.
    """

    def __init__(self, message: str, epoch: int, checkpoint: DenseNet, history: list):
        super().__init__(message)
        self.epoch = epoch
        self.checkpoint = checkpoint
        self.history = history


@dataclass(frozen=True)
class Schedule:
    epochs: int
    lr: float
    batch_size: int
    seed: int = 0
    stop_on_zero_hinge: bool = False

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if not (self.lr > 0.0):
            raise ValueError("learning rate must be positive")
        if self.batch_size < 1:
            raise ValueError("batch size must be at least 1")


@dataclass(frozen=True)
class HistoryRow:
    epoch: int
    hinge: float
    zero_one: float
    mean_gamma_op: float
    penalty: Optional[float] = None

    def to_dict(self) -> dict:
        row = asdict(self)
        if self.penalty is None:
            row.pop("penalty")
        return row


@dataclass
class TrainingResult:
    net: DenseNet
    history: list[HistoryRow] = field(default_factory=list)
    margin_reports: dict[int, MarginReport] = field(default_factory=dict)


def train(
    net: DenseNet,
    dataset: Dataset,
    schedule: Schedule,
    objective: Objective = Objective.HINGE,
    mask_policy: MaskPolicy = MaskPolicy.NONE,
    robust: Optional[RobustConfig] = None,
    margin_every: int = 0,
    log_every: int = 50,
) -> TrainingResult:
    """Projected mini-batch SGD, deterministic given ``schedule.seed``.

    :param net: Starting net.
    :param dataset: Nonempty training set.
    :param schedule: Epochs, learning rate, batch size and seed.
    :param objective: Plain hinge or the Jacobian-penalized robust objective.
    :param mask_policy: Dropout/dropconnect masks drawn fresh every step.
    :param robust: Required for the robust objective; also used by margin reports.
    :param margin_every: Record a margin report every this many epochs (0 disables).
    :param log_every: Log a summary line every this many epochs.
    :return: Final net, per-epoch history and the recorded margin reports.
    :raises TrainingDivergedError: When the loss or weights become non-finite.
    """
    if objective == Objective.ROBUST and robust is None:
        raise ValueError("the robust objective needs a RobustConfig")
    if margin_every > 0 and robust is None:
        raise ValueError("margin reports need a RobustConfig")

    if objective == Objective.ROBUST:
        def gradient(current, batch, mask):
            return robust_objective_grad(current, batch, robust, mask)[1]
    else:
        gradient = grad_hinge

    result = TrainingResult(net)
    m = len(dataset)
    step = 0
    for epoch in range(1, schedule.epochs + 1):
        checkpoint = net
        order = stream(schedule.seed, Stream.SHUFFLE, epoch).permutation(m)
        for start in range(0, m, schedule.batch_size):
            batch = dataset.subset(order[start:start + schedule.batch_size])
            net = sgd_step(
                net, batch, schedule.lr, mask_policy, schedule.seed, step, gradient
            )
            step += 1

        row = _history_row(net, dataset, epoch, robust if objective == Objective.ROBUST else None)
        if not math.isfinite(row.hinge) or not all(np.all(np.isfinite(w)) for w in net.weights):
            logger.error(f"Training diverged at epoch {epoch}")
            raise TrainingDivergedError(
                f"loss became non-finite at epoch {epoch}", epoch, checkpoint, result.history
            )
        result.history.append(row)

        if margin_every > 0 and epoch % margin_every == 0:
            result.margin_reports[epoch] = margin_report(net, dataset, robust)
        if log_every > 0 and epoch % log_every == 0:
            logger.info(
                f"epoch {epoch}: hinge={row.hinge:.6g} zero_one={row.zero_one:.4f} "
                f"mean_gamma_op={row.mean_gamma_op:.6g}"
            )
        if schedule.stop_on_zero_hinge and row.hinge == 0.0:
            logger.debug(f"Zero hinge loss reached at epoch {epoch}")
            break

    result.net = net
    return result


def _history_row(
    net: DenseNet, dataset: Dataset, epoch: int, robust: Optional[RobustConfig]
) -> HistoryRow:
    scores = forward_batch(net, dataset.samples).outputs
    correct = dataset.labels * scores > 0.0
    gammas = np.where(correct, output_margins(net, dataset.samples), 0.0)
    penalty = None
    if robust is not None:
        penalty = float(np.mean(feature_penalty(net, dataset.samples)))
    return HistoryRow(
        epoch=epoch,
        hinge=float(np.mean(hinge_losses(scores, dataset.labels))),
        zero_one=float(np.mean(~correct)),
        mean_gamma_op=float(np.mean(gammas)),
        penalty=penalty,
    )
