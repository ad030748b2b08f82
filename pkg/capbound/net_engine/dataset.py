from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from capbound.net_engine.rng import Stream, stream

logger = logging.getLogger(__name__)


class DatasetError(ValueError):
    """Raised for malformed, empty or inconsistent datasets."""
    pass


@dataclass(frozen=True)
class Dataset:
    """Training set S: m samples in R^d with labels in {-1, +1}."""

    samples: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        samples = np.array(self.samples, dtype=np.float64, ndmin=2)
        labels = np.array(self.labels, dtype=np.float64).reshape(-1)
        if samples.shape[0] == 0:
            raise DatasetError("dataset is empty")
        if samples.shape[0] != labels.shape[0]:
            raise DatasetError(
                f"{samples.shape[0]} samples but {labels.shape[0]} labels"
            )
        bad = np.flatnonzero((labels != 1.0) & (labels != -1.0))
        if bad.size:
            raise DatasetError(f"label at row {bad[0] + 1} is {labels[bad[0]]}, expected -1 or +1")
        if not np.all(np.isfinite(samples)):
            raise DatasetError("samples contain non-finite values")
        samples.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def dim(self) -> int:
        return self.samples.shape[1]

    def radius(self) -> float:
        """Measured max_i ||x_i||_2."""
        return float(np.max(np.linalg.norm(self.samples, axis=1)))

    def within(self, radius: float) -> bool:
        return self.radius() <= radius

    def subset(self, indices) -> "Dataset":
        indices = np.asarray(indices)
        return Dataset(self.samples[indices], self.labels[indices])


def load_csv(path: str | Path, expected_dim: int | None = None) -> Dataset:
    """Reads a headerless CSV: d feature columns then a label column.

    :param path: Path of the dataset file.
    :param expected_dim: If given, the feature dimension every row must have.
    :return: The dataset.
    :raises DatasetError: With the offending line on any malformed row.
    """
    rows, labels = [], []
    with open(path, "r", encoding="utf-8", newline="") as f:
        for line_number, row in enumerate(csv.reader(f), start=1):
            if not row or all(not cell.strip() for cell in row):
                continue
            try:
                values = [float(cell) for cell in row]
            except ValueError as e:
                raise DatasetError(f"{path}:{line_number}: {e}")
            if len(values) < 2:
                raise DatasetError(f"{path}:{line_number}: need at least one feature and a label")
            if rows and len(values) - 1 != len(rows[0]):
                raise DatasetError(
                    f"{path}:{line_number}: expected {len(rows[0])} features, got {len(values) - 1}"
                )
            if values[-1] not in (-1.0, 1.0):
                raise DatasetError(f"{path}:{line_number}: label {values[-1]} is not -1 or +1")
            rows.append(values[:-1])
            labels.append(values[-1])

    if not rows:
        raise DatasetError(f"{path}: dataset is empty")
    dataset = Dataset(np.array(rows), np.array(labels))
    if expected_dim is not None and dataset.dim != expected_dim:
        raise DatasetError(f"{path}: features have dimension {dataset.dim}, spec expects {expected_dim}")
    logger.info(f"Loaded {len(dataset)} samples of dimension {dataset.dim} from {path}")
    return dataset


def save_csv(path: str | Path, dataset: Dataset) -> None:
    """Writes the dataset with shortest round-trip decimals and LF line endings."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        for sample, label in zip(dataset.samples, dataset.labels):
            writer.writerow([repr(float(v)) for v in sample] + [str(int(label))])


def two_moons(
    m: int, seed: int, radius: float = 1.0, noise: float = 0.05, append_constant: bool = True
) -> Dataset:
    """Deterministic interleaving half circles scaled into the ball of the given radius.

    The moons are centered on the origin. With ``append_constant`` a third
    coordinate holding a constant is added, which lets the bias-free network
    class place its first-layer hyperplanes away from the origin.

    :param m: Number of samples; the first ceil(m/2) are labelled +1.
    :param seed: Seed of the data stream.
    :param radius: Radius R every sample ends up within.
    :param noise: Standard deviation of Gaussian jitter before scaling.
    """
    if m < 2:
        raise DatasetError("two moons needs at least 2 samples")
    rng = stream(seed, Stream.DATA)
    upper = math.ceil(m / 2)
    theta = rng.uniform(0.0, math.pi, size=m)
    points = np.empty((m, 2))
    points[:upper, 0] = np.cos(theta[:upper])
    points[:upper, 1] = np.sin(theta[:upper])
    points[upper:, 0] = 1.0 - np.cos(theta[upper:])
    points[upper:, 1] = 0.5 - np.sin(theta[upper:])
    points += noise * rng.standard_normal(size=(m, 2))
    points -= np.array([0.5, 0.25])

    if append_constant:
        points = np.hstack([points, np.ones((m, 1))])
    labels = np.where(np.arange(m) < upper, 1.0, -1.0)

    # shrink by a few ulps so the measured radius never exceeds the declared one
    scale = radius / np.max(np.linalg.norm(points, axis=1)) * (1.0 - 1e-12)
    return Dataset(points * scale, labels)


def sample_ball(rng: np.random.Generator, m: int, dim: int, radius: float) -> np.ndarray:
    """m points drawn uniformly from the Euclidean ball of the given radius."""
    directions = rng.standard_normal(size=(m, dim))
    directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    scales = radius * rng.random(m) ** (1.0 / dim)
    return directions * scales[:, None]


def sample_sphere(rng: np.random.Generator, m: int, dim: int, radius: float) -> np.ndarray:
    directions = rng.standard_normal(size=(m, dim))
    return radius * directions / np.linalg.norm(directions, axis=1, keepdims=True)
