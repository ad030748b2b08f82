from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Optional

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class OracleResult:
    """Outcome of one verification oracle.

    Every oracle reduces its evidence to a single statistic that passes when it
    is at most ``threshold``; ``details`` keeps the diagnostics behind it.
    """

    name: str
    passed: bool
    statistic: float
    threshold: float
    samples: int
    seed: Optional[int]
    statistical: bool = False
    details: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def create(
        cls,
        name: str,
        statistic: float,
        threshold: float,
        samples: int,
        seed: Optional[int],
        statistical: bool = False,
        **details: Any,
    ) -> "OracleResult":
        passed = not math.isnan(statistic) and statistic <= threshold
        result = cls(name, passed, float(statistic), float(threshold), samples, seed, statistical, details)
        log = logger.info if passed else logger.warning
        log(f"Oracle {name}: {'pass' if passed else 'FAIL'} (statistic={statistic:.6g}, threshold={threshold:.6g})")
        return result

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": self.passed,
            "statistic": self.statistic,
            "threshold": self.threshold,
            "samples": self.samples,
            "seed": self.seed,
            "statistical": self.statistical,
            "details": self.details,
        }
