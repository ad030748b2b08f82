from __future__ import annotations

import logging
import math
from typing import Optional, Sequence

from pydantic import ValidationError

from capbound.capacity.bound_report import BoundPreconditionError, BoundReport, Theorem
from capbound.model_spec.errors import SpecError
from capbound.model_spec.network_spec import DataStats, LayerSpec, NetworkSpec, ResNetSpec
from capbound.model_spec.validation import issues_from_validation_error, validate, validate_resnet

logger = logging.getLogger(__name__)


def vc_bound_mlp(
    spec: NetworkSpec, data: DataStats, lipschitz: Optional[float] = None
) -> BoundReport:
    """VC bound R^2 A_{P+1}^2 prod_k L_k^2 h_k A_k^2 of a max-norm constrained MLP.

    :param spec: The architecture; hidden activations must pass through the origin.
    :param data: Input radius R.
    :param lipschitz: Optional constant replacing every per-layer L_k.
    :return: The bound with its factor breakdown.
    :raises BoundPreconditionError: If the spec is invalid for the bound.
    """
    _require_valid(spec)
    factors = [_radius_factor(data.radius), _output_factor(spec.output_max_norm)]
    factors += _hidden_factors(spec.hidden, lipschitz=lipschitz)
    return BoundReport.from_factors(Theorem.T1, factors)


def vc_bound_fixed_width(
    P: int, h: int, A: Sequence[float], L: float, R: float
) -> BoundReport:
    """Uniform-width form R^2 A_{P+1}^2 L^{2P} h^P prod_k A_k^2.

    With L = 1 (relu) this is the fixed-width corollary; for any L it equals
    `vc_bound_mlp` on the corresponding uniform spec.

    :param A: max-norms A_1, ..., A_P, A_{P+1}.
    """
    if P < 0:
        raise BoundPreconditionError(f"P must be nonnegative, got {P}")
    if h < 1:
        raise BoundPreconditionError(f"h must be at least 1, got {h}")
    if len(A) != P + 1:
        raise BoundPreconditionError(f"expected {P + 1} max-norms A_1..A_(P+1), got {len(A)}")
    if any(not (a > 0.0) for a in A) or not (R > 0.0) or not (L > 0.0):
        raise BoundPreconditionError("max-norms, L and R must be positive")

    factors = [_radius_factor(R), _output_factor(A[-1])]
    for k in range(1, P + 1):
        factors.append((f"L_{k}^2", L * L))
        factors.append((f"h*A_{k}^2", float(h) * (A[k - 1] * A[k - 1])))
    return BoundReport.from_factors(Theorem.T1_FIXED_WIDTH, factors)


def vc_bound_dropout(spec: NetworkSpec, data: DataStats) -> BoundReport:
    """Dropout bound p_0 R^2 A_{P+1}^2 prod_k p_k L_k^2 h_k A_k^2."""
    _require_valid(spec)
    factors = [("p_0", spec.input_keep_prob), _radius_factor(data.radius)]
    factors.append(_output_factor(spec.output_max_norm))
    factors += _hidden_factors(spec.hidden, keep_probs=[layer.keep_prob for layer in spec.hidden])
    return BoundReport.from_factors(Theorem.T2_DROPOUT, factors)


def vc_bound_dropconnect(spec: NetworkSpec, data: DataStats) -> BoundReport:
    """Dropconnect bound p_{0,1} R^2 A_{P+1}^2 prod_k p_{k,k+1} L_k^2 h_k A_k^2."""
    _require_valid(spec)
    factors = [("p_{0,1}", spec.input_dc_keep_prob), _radius_factor(data.radius)]
    factors.append(_output_factor(spec.output_max_norm))
    factors += _hidden_factors(
        spec.hidden,
        keep_probs=[layer.dc_keep_prob for layer in spec.hidden],
        keep_label="p_{{{k},{k}+1}}",
    )
    return BoundReport.from_factors(Theorem.T3_DROPCONNECT, factors)


def vc_bound_robust(spec: NetworkSpec, data: DataStats) -> BoundReport:
    """Bound for inputs perturbed within radius c: R^2 is replaced by R^2 + c^2."""
    _require_valid(spec)
    radius, noise = data.radius, data.noise_radius
    factors = [("R^2+c^2", radius * radius + noise * noise), _output_factor(spec.output_max_norm)]
    factors += _hidden_factors(spec.hidden)
    return BoundReport.from_factors(Theorem.T5_ROBUST, factors)


def vc_bound_resnet(rspec: ResNetSpec, data: DataStats) -> BoundReport:
    """Residual network bound, evaluated term by term as stated.

    R^2 A_{P+1}^2 (prod_k p_k L_k^2 h_k A_k^2) (A_0 N_0 v_0^2)
    prod_r (A_r N_r v_r^2)^{3T'} L^{4T'} p_r^{T'}
    """
    issues = validate_resnet(rspec)
    if issues:
        raise BoundPreconditionError("; ".join(str(issue) for issue in issues))

    factors = [_radius_factor(data.radius), _output_factor(rspec.output_max_norm)]
    factors += _hidden_factors(rspec.fc_tail, keep_probs=[layer.keep_prob for layer in rspec.fc_tail])

    stem = rspec.stem
    factors.append(("A_0*N_0*v_0^2", stem.max_norm * stem.filters * float(stem.filter_size) ** 2))
    logs = [math.log(factor) for _, factor in factors]
    block_lipschitz = rspec.activation.lipschitz
    for r, block in enumerate(rspec.blocks, start=1):
        units = block.units
        unit_term = block.max_norm * block.filters * float(block.filter_size) ** 2
        for label, base, exponent in (
            (f"(A_{r}*N_{r}*v_{r}^2)^(3T')", unit_term, 3 * units),
            (f"L^(4T')[{r}]", block_lipschitz, 4 * units),
            (f"p_{r}^T'", block.keep_prob, units),
        ):
            factor, log_factor = _power_factor(base, exponent)
            factors.append((label, factor))
            logs.append(log_factor)
    return BoundReport.from_factors(Theorem.T4_RESNET, factors, logs)


def feature_radius_bound(
    spec: NetworkSpec, data: DataStats, keep_probs: Optional[Sequence[float]] = None
) -> float:
    """Bound on max_i ||phi_P(x_i)||^2, i.e. the VC bound without the A_{P+1}^2 factor.

    :param keep_probs: Optional dropout keep probabilities p_0, ..., p_P; when given the
        result bounds the expected squared feature norm under dropout.
    """
    _require_valid(spec)
    if keep_probs is not None and len(keep_probs) != spec.depth + 1:
        raise BoundPreconditionError(
            f"expected {spec.depth + 1} keep probabilities p_0..p_P, got {len(keep_probs)}"
        )

    factors = [_radius_factor(data.radius)]
    if keep_probs is not None:
        factors.insert(0, ("p_0", float(keep_probs[0])))
        factors += _hidden_factors(spec.hidden, keep_probs=list(keep_probs[1:]))
    else:
        factors += _hidden_factors(spec.hidden)
    return BoundReport.from_factors(Theorem.T1, factors).value


def all_bounds(
    spec: NetworkSpec | ResNetSpec, data: DataStats, robust_c: Optional[float] = None
) -> list[BoundReport]:
    """Every bound applicable to a spec; resnets only get the residual bound.

    :raises SpecError: If robust_c is not a valid noise radius.
    """
    if isinstance(spec, ResNetSpec):
        return [vc_bound_resnet(spec, data)]

    reports = [vc_bound_mlp(spec, data)]
    widths = {layer.width for layer in spec.hidden}
    activations = {layer.activation for layer in spec.hidden}
    if len(widths) <= 1 and len(activations) <= 1:
        width = widths.pop() if widths else 1
        lipschitz = activations.pop().lipschitz if activations else 1.0
        reports.append(
            vc_bound_fixed_width(spec.depth, width, spec.max_norms, lipschitz, data.radius)
        )
    reports.append(vc_bound_dropout(spec, data))
    reports.append(vc_bound_dropconnect(spec, data))
    if robust_c is not None:
        try:
            robust_data = DataStats.model_validate({**data.model_dump(), "noise_radius": robust_c})
        except ValidationError as e:
            raise SpecError(issues_from_validation_error(e))
        reports.append(vc_bound_robust(spec, robust_data))
    return reports


def sample_complexity_ratio(spec: NetworkSpec) -> dict[str, float]:
    """Factor by which dropout and dropconnect shrink the plain bound."""
    dropout = 1.0
    for p in spec.dropout_keep_probs:
        dropout *= p
    dropconnect = 1.0
    for p in spec.dropconnect_keep_probs:
        dropconnect *= p
    return {"dropout": dropout, "dropconnect": dropconnect}


def capacity_profile(
    spec: NetworkSpec, data: DataStats, max_extra_depth: int = 3
) -> list[dict]:
    """Bound values as the last hidden layer is repeated 0..max_extra_depth times.

    Each row reports the depth, the bound, and whether the repeated layer's
    h*A^2*L^2 is below, at, or above one (capacity shrinking, flat, growing).
    """
    _require_valid(spec)
    if spec.depth == 0:
        raise BoundPreconditionError("depth profile needs at least one hidden layer to repeat")

    repeated = spec.hidden[-1]
    gain = repeated.width * repeated.max_norm ** 2 * repeated.activation.lipschitz ** 2
    trend = "shrinking" if gain < 1.0 else "growing" if gain > 1.0 else "flat"

    rows = []
    for extra in range(max_extra_depth + 1):
        deeper = spec.with_hidden(list(spec.hidden) + [repeated] * extra)
        rows.append(
            {
                "depth": deeper.depth,
                "value": vc_bound_mlp(deeper, data).value,
                "layer_gain": gain,
                "trend": trend,
            }
        )
    return rows


def _require_valid(spec: NetworkSpec) -> None:
    issues = validate(spec, require_origin_passing=True)
    if issues:
        raise BoundPreconditionError("; ".join(str(issue) for issue in issues))


def _radius_factor(radius: float) -> tuple[str, float]:
    return ("R^2", radius * radius)


def _output_factor(output_max_norm: float) -> tuple[str, float]:
    return ("A_{P+1}^2", output_max_norm * output_max_norm)


def _hidden_factors(
    layers: Sequence[LayerSpec],
    keep_probs: Optional[Sequence[float]] = None,
    lipschitz: Optional[float] = None,
    keep_label: str = "p_{k}",
) -> list[tuple[str, float]]:
    """Per-layer factors (p_k,) L_k^2, h_k A_k^2 in a fixed order shared by every bound."""
    factors = []
    for k, layer in enumerate(layers, start=1):
        if keep_probs is not None:
            factors.append((keep_label.format(k=k), float(keep_probs[k - 1])))
        constant = layer.activation.lipschitz if lipschitz is None else lipschitz
        factors.append((f"L_{k}^2", constant * constant))
        factors.append((f"h_{k}*A_{k}^2", float(layer.width) * (layer.max_norm * layer.max_norm)))
    return factors


def _power_factor(base: float, exponent: int) -> tuple[float, float]:
    """base**exponent and its natural log; the power is inf when it overflows a float."""
    try:
        factor = base ** exponent
    except OverflowError:
        factor = math.inf
    return factor, exponent * math.log(base)
