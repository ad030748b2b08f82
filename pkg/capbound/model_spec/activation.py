from __future__ import annotations

import enum
import logging
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

logger = logging.getLogger(__name__)

DEFAULT_LEAKY_SLOPE = 0.01


class ActivationName(enum.Enum):
    """Activation families supported by the hypothesis class and helper methods"""

    RELU = "relu"
    LEAKY_RELU = "leaky_relu"
    TANH = "tanh"
    SIGMOID = "sigmoid"

    def passes_through_origin(self) -> bool:
        """Whether sigma(0) = 0 for this family."""
        return self != ActivationName.SIGMOID

    def is_piecewise_linear(self) -> bool:
        return self in (ActivationName.RELU, ActivationName.LEAKY_RELU)

    def to_keyword(self) -> str:
        """Returns the string used in spec documents for this family."""
        return self.value


class ActivationKind(BaseModel):
    """Elementwise activation with its (optional) leaky slope.

    Accepts either a bare name (``"relu"``) or a mapping
    (``{"kind": "leaky_relu", "slope": 0.05}``) when validated.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: ActivationName = ActivationName.RELU
    slope: float = Field(default=DEFAULT_LEAKY_SLOPE, ge=0.0)

    @model_validator(mode="before")
    @classmethod
    def accept_bare_name(cls, data: Any) -> Any:
        if isinstance(data, str):
            return {"kind": data.strip().lower()}
        if isinstance(data, ActivationName):
            return {"kind": data}
        return data

    @property
    def lipschitz(self) -> float:
        return lipschitz_constant(self)

    @property
    def passes_through_origin(self) -> bool:
        return self.kind.passes_through_origin()

    def to_document(self) -> str | dict:
        """Compact document form: bare name unless a non-default slope matters."""
        if self.kind == ActivationName.LEAKY_RELU and self.slope != DEFAULT_LEAKY_SLOPE:
            return {"kind": self.kind.to_keyword(), "slope": self.slope}
        return self.kind.to_keyword()

    def apply(self, z: np.ndarray) -> np.ndarray:
        if self.kind == ActivationName.RELU:
            return np.maximum(z, 0.0)
        if self.kind == ActivationName.LEAKY_RELU:
            return np.where(z > 0.0, z, self.slope * z)
        if self.kind == ActivationName.TANH:
            return np.tanh(z)
        return _sigmoid(z)

    def derivative(self, z: np.ndarray) -> np.ndarray:
        """sigma'(z); the relu kink takes the subderivative 0 (slope for leaky)."""
        if self.kind == ActivationName.RELU:
            return (z > 0.0).astype(np.float64)
        if self.kind == ActivationName.LEAKY_RELU:
            return np.where(z > 0.0, 1.0, self.slope)
        if self.kind == ActivationName.TANH:
            t = np.tanh(z)
            return 1.0 - t * t
        s = _sigmoid(z)
        return s * (1.0 - s)

    def second_derivative(self, z: np.ndarray) -> np.ndarray:
        if self.kind.is_piecewise_linear():
            return np.zeros_like(z, dtype=np.float64)
        if self.kind == ActivationName.TANH:
            t = np.tanh(z)
            return -2.0 * t * (1.0 - t * t)
        s = _sigmoid(z)
        return s * (1.0 - s) * (1.0 - 2.0 * s)

    def kink_mask(self, z: np.ndarray) -> np.ndarray:
        """Entries sitting exactly on a non-differentiable point."""
        if self.kind.is_piecewise_linear():
            return z == 0.0
        return np.zeros_like(z, dtype=bool)


def lipschitz_constant(activation: ActivationKind) -> float:
    """Returns the Lipschitz constant L_sigma of an activation.

    :param activation: The activation to inspect.
    :return: 1 for relu and tanh, max(1, slope) for leaky relu, 1/4 for sigmoid.
    """
    if activation.kind == ActivationName.RELU:
        return 1.0
    if activation.kind == ActivationName.LEAKY_RELU:
        return max(1.0, activation.slope)
    if activation.kind == ActivationName.TANH:
        return 1.0
    return 0.25


def _sigmoid(z: np.ndarray) -> np.ndarray:
    # exp of a non-positive argument only, so it never overflows
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0.0, 1.0 / (1.0 + e), e / (1.0 + e))
