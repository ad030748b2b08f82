from __future__ import annotations

import logging
from typing import Any, Iterable

from pydantic import BaseModel, ValidationError

from capbound.model_spec.errors import SpecError, SpecIssue
from capbound.model_spec.network_spec import LayerSpec, NetworkSpec, ResNetSpec

logger = logging.getLogger(__name__)


def format_location(loc: Iterable[Any]) -> str:
    """Renders a pydantic location tuple as ``hidden[1].keep_prob``."""
    path = ""
    for part in loc:
        if isinstance(part, int):
            path += f"[{part}]"
        else:
            path += f".{part}" if path else str(part)
    return path


def issues_from_validation_error(error: ValidationError) -> list[SpecIssue]:
    """Converts pydantic errors into per-field diagnostics."""
    issues = []
    for detail in error.errors():
        message = detail["msg"]
        ctx_error = detail.get("ctx", {}).get("error")
        if detail["type"] == "value_error" and ctx_error is not None:
            message = str(ctx_error)
        elif detail["type"] == "missing":
            message = "required field is missing"
        issues.append(SpecIssue(path=format_location(detail["loc"]), message=message))
    return issues


def origin_issues(layers: Iterable[LayerSpec], prefix: str) -> list[SpecIssue]:
    """Flags hidden layers whose activation does not satisfy sigma(0) = 0."""
    issues = []
    for index, layer in enumerate(layers):
        if not layer.activation.passes_through_origin:
            issues.append(
                SpecIssue(
                    path=f"{prefix}[{index}].activation",
                    message=(
                        f"{layer.activation.kind.to_keyword()} does not pass through the origin "
                        "(sigma(0) != 0); the radius-margin bounds require an origin-passing "
                        "hidden activation"
                    ),
                )
            )
    return issues


def validate(
    spec: NetworkSpec | dict, require_origin_passing: bool = True
) -> list[SpecIssue]:
    """Checks a network spec (or its raw mapping) against every invariant.

    :param spec: A constructed `NetworkSpec` or a mapping to validate.
    :param require_origin_passing: Whether bounds built on sigma(0) = 0 will be requested.
    :return: The list of diagnostics, empty when the spec is valid.
    """
    return _validate_model(NetworkSpec, spec, "hidden", require_origin_passing)


def validate_resnet(
    spec: ResNetSpec | dict, require_origin_passing: bool = True
) -> list[SpecIssue]:
    """Resnet counterpart of `validate`; only the fully connected tail is origin-checked."""
    return _validate_model(ResNetSpec, spec, "fc_tail", require_origin_passing)


def ensure_valid(spec: NetworkSpec | ResNetSpec, require_origin_passing: bool = True) -> None:
    """Raises `SpecError` unless the spec validates."""
    if isinstance(spec, ResNetSpec):
        issues = validate_resnet(spec, require_origin_passing)
    else:
        issues = validate(spec, require_origin_passing)
    if issues:
        raise SpecError(issues)


def _validate_model(
    model_type: type[BaseModel],
    spec: BaseModel | dict,
    layers_field: str,
    require_origin_passing: bool,
) -> list[SpecIssue]:
    if not isinstance(spec, model_type):
        try:
            spec = model_type.model_validate(spec)
        except ValidationError as e:
            issues = issues_from_validation_error(e)
            logger.debug(f"Spec rejected with {len(issues)} issue(s)")
            return issues
    else:
        # constructed models may still come from model_construct; re-run the validators
        try:
            model_type.model_validate(spec.model_dump())
        except ValidationError as e:
            return issues_from_validation_error(e)

    if require_origin_passing:
        return origin_issues(getattr(spec, layers_field), layers_field)
    return []
