from __future__ import annotations

import enum
import logging
import math
import sys
from dataclasses import dataclass, field
from typing import Optional, Sequence

logger = logging.getLogger(__name__)

# partial products above this switch the accumulation to log space
SATURATION_THRESHOLD = 1e300
LOG_FLOAT_MAX = math.log(sys.float_info.max)


class Theorem(enum.Enum):
    """Which capacity statement a `BoundReport` evaluates."""

    T1 = "T1"
    T1_FIXED_WIDTH = "T1_fixed_width"
    T2_DROPOUT = "T2_dropout"
    T3_DROPCONNECT = "T3_dropconnect"
    T4_RESNET = "T4_resnet"
    T5_ROBUST = "T5_robust"

    def describe(self) -> str:
        if self == Theorem.T1:
            return "radius-margin VC bound of a max-norm constrained MLP"
        elif self == Theorem.T1_FIXED_WIDTH:
            return "fixed-width form of the MLP bound"
        elif self == Theorem.T2_DROPOUT:
            return "MLP bound under dropout"
        elif self == Theorem.T3_DROPCONNECT:
            return "MLP bound under dropconnect"
        elif self == Theorem.T4_RESNET:
            return "residual network bound"
        else:
            return "MLP bound for inputs perturbed within radius c"


class BoundPreconditionError(ValueError):
    """Raised when a bound is requested on a spec that violates its preconditions."""
    pass


@dataclass(frozen=True)
class BoundReport:
    """A computed VC bound with the ordered factors whose product is the value."""

    theorem: Theorem
    value: float
    value_floor: Optional[int]
    factors: list[tuple[str, float]] = field(default_factory=list)
    saturated: bool = False
    log_value: float = 0.0

    @classmethod
    def from_factors(
        cls,
        theorem: Theorem,
        factors: list[tuple[str, float]],
        logs: Optional[Sequence[float]] = None,
    ) -> "BoundReport":
        """Multiplies the factors left to right, falling back to log space near overflow.

        :param factors: Labelled factors; a factor too large for a float is stored as inf.
        :param logs: Natural logs of the factors, one per factor. Needed whenever a factor
            is stored as inf, since its log cannot be recovered from the float.
        :return: The assembled report.
        """
        if logs is None:
            logs = [math.log(factor) if factor > 0.0 else -math.inf for _, factor in factors]
        elif len(logs) != len(factors):
            raise ValueError(f"expected {len(factors)} factor logs, got {len(logs)}")

        value = 1.0
        saturated = False
        for label, factor in factors:
            value *= factor
            if not math.isfinite(value) or abs(value) > SATURATION_THRESHOLD:
                saturated = True

        if any(log == -math.inf for log in logs):
            log_value = -math.inf
            value = 0.0
        else:
            log_value = math.fsum(logs)

        if saturated:
            value = math.exp(log_value) if log_value < LOG_FLOAT_MAX else math.inf
            logger.warning(
                f"{theorem.value} bound saturated: accumulated in log space (ln value = {log_value:.6g})"
            )

        value_floor = math.floor(value) if math.isfinite(value) else None
        return cls(
            theorem=theorem,
            value=value,
            value_floor=value_floor,
            factors=list(factors),
            saturated=saturated,
            log_value=log_value,
        )

    def factor_product(self) -> float:
        product = 1.0
        for _, factor in self.factors:
            product *= factor
        return product

    def to_dict(self) -> dict:
        return {
            "theorem": self.theorem.value,
            "description": self.theorem.describe(),
            "value": self.value,
            "value_floor": self.value_floor,
            "saturated": self.saturated,
            "log_value": self.log_value,
            "factors": [{"label": label, "value": factor} for label, factor in self.factors],
        }
