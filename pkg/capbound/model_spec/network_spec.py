from __future__ import annotations

import logging
import math

from pydantic import BaseModel, ConfigDict, Field, field_validator

from capbound.model_spec.activation import ActivationKind

logger = logging.getLogger(__name__)

KEEP_PROB_MESSAGE = "keep probability must be in (0,1]"


def _check_keep_prob(value: float) -> float:
    if not (0.0 < value <= 1.0):
        raise ValueError(KEEP_PROB_MESSAGE)
    return value


def _check_max_norm(value: float) -> float:
    if not (value > 0.0) or math.isinf(value):
        raise ValueError("max-norm must be a positive finite real")
    return value


def _check_count(value: int, what: str) -> int:
    if value < 1:
        raise ValueError(f"{what} must be at least 1")
    return value


class LayerSpec(BaseModel):
    """One hidden layer k: width h_k, activation, max-norm A_k and keep probabilities.

    ``keep_prob`` is the dropout keep probability p_k applied to the layer output,
    ``dc_keep_prob`` the dropconnect keep probability p_{k,k+1} applied to the
    weights leaving the layer.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    width: int
    activation: ActivationKind = Field(default_factory=ActivationKind)
    max_norm: float
    keep_prob: float = 1.0
    dc_keep_prob: float = 1.0

    @field_validator("width")
    @classmethod
    def positive_width(cls, value: int) -> int:
        return _check_count(value, "width")

    @field_validator("max_norm")
    @classmethod
    def positive_max_norm(cls, value: float) -> float:
        return _check_max_norm(value)

    @field_validator("keep_prob", "dc_keep_prob")
    @classmethod
    def probability(cls, value: float) -> float:
        return _check_keep_prob(value)


class NetworkSpec(BaseModel):
    """Declarative bias-free MLP with P hidden layers and a single output unit."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    input_dim: int
    input_keep_prob: float = 1.0
    input_dc_keep_prob: float = 1.0
    hidden: tuple[LayerSpec, ...] = ()
    output_max_norm: float

    @field_validator("input_dim")
    @classmethod
    def positive_input_dim(cls, value: int) -> int:
        return _check_count(value, "input_dim")

    @field_validator("input_keep_prob", "input_dc_keep_prob")
    @classmethod
    def probability(cls, value: float) -> float:
        return _check_keep_prob(value)

    @field_validator("output_max_norm")
    @classmethod
    def positive_output_norm(cls, value: float) -> float:
        return _check_max_norm(value)

    @property
    def depth(self) -> int:
        """Number of hidden layers P."""
        return len(self.hidden)

    @property
    def widths(self) -> list[int]:
        """h_0, ..., h_P, h_{P+1} = 1."""
        return [self.input_dim] + [layer.width for layer in self.hidden] + [1]

    @property
    def max_norms(self) -> list[float]:
        """A_1, ..., A_{P+1}; entry k caps the incoming vectors of layer k+1."""
        return [layer.max_norm for layer in self.hidden] + [self.output_max_norm]

    @property
    def dropout_keep_probs(self) -> list[float]:
        """p_0, ..., p_P."""
        return [self.input_keep_prob] + [layer.keep_prob for layer in self.hidden]

    @property
    def dropconnect_keep_probs(self) -> list[float]:
        """p_{0,1}, ..., p_{P,P+1}."""
        return [self.input_dc_keep_prob] + [layer.dc_keep_prob for layer in self.hidden]

    @property
    def activations(self) -> list[ActivationKind]:
        return [layer.activation for layer in self.hidden]

    def with_hidden(self, hidden: list[LayerSpec]) -> "NetworkSpec":
        return self.model_copy(update={"hidden": tuple(hidden)})


class StemSpec(BaseModel):
    """Input convolution cv_0 raising the number of filters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    max_norm: float
    filters: int
    filter_size: int

    @field_validator("max_norm")
    @classmethod
    def positive_max_norm(cls, value: float) -> float:
        return _check_max_norm(value)

    @field_validator("filters")
    @classmethod
    def positive_filters(cls, value: int) -> int:
        return _check_count(value, "filters")

    @field_validator("filter_size")
    @classmethod
    def positive_filter_size(cls, value: int) -> int:
        return _check_count(value, "filter_size")


class BlockSpec(StemSpec):
    """Residual block r: T' units of (sigma, cv, dropout, sigma, cv) plus its reduction cv."""

    units: int
    stride: int = 1
    keep_prob: float = 1.0

    @field_validator("units")
    @classmethod
    def positive_units(cls, value: int) -> int:
        return _check_count(value, "units")

    @field_validator("stride")
    @classmethod
    def positive_stride(cls, value: int) -> int:
        return _check_count(value, "stride")

    @field_validator("keep_prob")
    @classmethod
    def probability(cls, value: float) -> float:
        return _check_keep_prob(value)


class ResNetSpec(BaseModel):
    """Residual architecture description used only by the capacity calculator.

    Strides are carried for completeness; no bound depends on them.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    stem: StemSpec
    blocks: tuple[BlockSpec, ...]
    activation: ActivationKind = Field(default_factory=ActivationKind)
    fc_tail: tuple[LayerSpec, ...] = ()
    output_max_norm: float

    @field_validator("blocks")
    @classmethod
    def at_least_one_block(cls, value: tuple[BlockSpec, ...]) -> tuple[BlockSpec, ...]:
        if len(value) < 1:
            raise ValueError("T ≥ 1 required")
        return value

    @field_validator("output_max_norm")
    @classmethod
    def positive_output_norm(cls, value: float) -> float:
        return _check_max_norm(value)

    @property
    def depth(self) -> int:
        """Number of fully connected layers P in the tail."""
        return len(self.fc_tail)


class DataStats(BaseModel):
    """Input radius R and admissible noise radius c."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    radius: float
    noise_radius: float = 0.0

    @field_validator("radius")
    @classmethod
    def positive_radius(cls, value: float) -> float:
        if not (value > 0.0) or math.isinf(value):
            raise ValueError("radius must be a positive finite real")
        return value

    @field_validator("noise_radius")
    @classmethod
    def nonnegative_noise(cls, value: float) -> float:
        if not (value >= 0.0) or math.isinf(value):
            raise ValueError("noise_radius must be a nonnegative finite real")
        return value


def output_margin_gamma(output_weight_norm: float) -> float:
    """Output margin gamma = 1 / ||w_{P,P+1}|| of a set shattered with functional margin 1.

    :param output_weight_norm: Euclidean norm of the output weight vector.
    :return: The geometric output margin.
    :raises ValueError: If the norm is not positive.
    """
    if not (output_weight_norm > 0.0):
        raise ValueError(f"output weight norm must be positive, got {output_weight_norm}")
    return 1.0 / output_weight_norm
