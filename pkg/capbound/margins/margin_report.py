from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

from capbound.model_spec.network_spec import NetworkSpec

logger = logging.getLogger(__name__)

DEFAULT_BALL_SAMPLES = 256
DEFAULT_TOL_FACTOR = 1e-6
SEARCH_RADIUS_FACTOR = 4.0


@dataclass(frozen=True)
class RobustConfig:
    """Noise radius c and the settings of the margin estimators.

    ``penalty_weight`` is c * A_{P+1}; build instances with `RobustConfig.create`
    so the two never disagree.
    """

    noise_radius: float
    penalty_weight: float
    radius: float
    ball_samples: int = DEFAULT_BALL_SAMPLES
    bisection_tol: Optional[float] = None
    seed: int = 0

    @classmethod
    def create(
        cls,
        spec: NetworkSpec,
        noise_radius: float,
        radius: float,
        ball_samples: int = DEFAULT_BALL_SAMPLES,
        bisection_tol: Optional[float] = None,
        seed: int = 0,
    ) -> "RobustConfig":
        if not (noise_radius >= 0.0):
            raise ValueError(f"noise radius must be nonnegative, got {noise_radius}")
        if not (radius > 0.0):
            raise ValueError(f"radius must be positive, got {radius}")
        if ball_samples < 1:
            raise ValueError("ball_samples must be at least 1")
        return cls(
            noise_radius=noise_radius,
            penalty_weight=noise_radius * spec.output_max_norm,
            radius=radius,
            ball_samples=ball_samples,
            bisection_tol=bisection_tol,
            seed=seed,
        )

    @property
    def tol(self) -> float:
        """Bisection tolerance; 1e-6 * R unless set."""
        return self.bisection_tol if self.bisection_tol is not None else DEFAULT_TOL_FACTOR * self.radius

    @property
    def search_radius(self) -> float:
        return SEARCH_RADIUS_FACTOR * self.radius


@dataclass(frozen=True)
class SampleMargins:
    """Margins of one sample. Misclassified samples carry zeros and ``misclassified``."""

    index: int
    label: float
    score: float
    output_margin: float
    input_margin_upper: float
    input_margin_certificate: float
    jacobian_sup: float
    certificate_samples: int
    misclassified: bool = False
    flags: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class MarginReport:
    """Per-sample margins plus aggregates over the correctly classified samples."""

    samples: list[SampleMargins]
    ball_samples: int
    bisection_tol: float

    @property
    def classified(self) -> list[SampleMargins]:
        return [s for s in self.samples if not s.misclassified]

    @property
    def misclassified_count(self) -> int:
        return len(self.samples) - len(self.classified)

    def aggregates(self) -> dict:
        classified = self.classified
        summary = {"samples": len(self.samples), "misclassified": self.misclassified_count}
        for name in ("output_margin", "input_margin_upper", "input_margin_certificate", "jacobian_sup"):
            values = [getattr(s, name) for s in classified if math.isfinite(getattr(s, name))]
            summary[f"mean_{name}"] = math.fsum(values) / len(values) if values else None
            summary[f"min_{name}"] = min(values) if values else None
        return summary

    def sandwich_violations(self) -> int:
        """Classified samples whose certificate exceeds the upper estimate by more than tol."""
        return sum(
            1
            for s in self.classified
            if s.input_margin_certificate > s.input_margin_upper + self.bisection_tol
        )

    def to_dict(self) -> dict:
        return {
            "ball_samples": self.ball_samples,
            "bisection_tol": self.bisection_tol,
            "aggregates": self.aggregates(),
            "samples": [s.to_dict() for s in self.samples],
        }
