from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass
from typing import Any, Optional

import yaml
from pydantic import ValidationError

from capbound.model_spec.errors import SpecIssue, SpecParseError
from capbound.model_spec.network_spec import (
    BlockSpec,
    DataStats,
    LayerSpec,
    NetworkSpec,
    ResNetSpec,
    StemSpec,
)
from capbound.model_spec.validation import issues_from_validation_error

logger = logging.getLogger(__name__)

MLP_KIND = "mlp"
RESNET_KIND = "resnet"


@dataclass(frozen=True)
class SpecDocument:
    """A parsed spec document: the architecture plus its optional data statistics."""

    spec: NetworkSpec | ResNetSpec
    data: Optional[DataStats] = None

    @property
    def is_resnet(self) -> bool:
        return isinstance(self.spec, ResNetSpec)


def parse_network_spec(text: str) -> NetworkSpec:
    """Parses a YAML network document into a `NetworkSpec`.

    :param text: The document text.
    :return: The validated spec.
    :raises SpecParseError: With line and field location of the first problems.
    """
    document = load_spec_document(text)
    if document.is_resnet:
        raise SpecParseError([SpecIssue("kind", "document describes a resnet, not an MLP")])
    return document.spec


def parse_resnet_spec(text: str) -> ResNetSpec:
    """Parses a YAML resnet document into a `ResNetSpec`."""
    document = load_spec_document(text, default_kind=RESNET_KIND)
    if not document.is_resnet:
        raise SpecParseError([SpecIssue("kind", "document describes an MLP, not a resnet")])
    return document.spec


def load_spec_document(text: str, default_kind: str = MLP_KIND) -> SpecDocument:
    """Parses either kind of spec document, dispatching on its ``kind`` key."""
    root_node, data = _load_yaml(text)

    kind = str(data.pop("kind", default_kind)).strip().lower()
    if kind not in (MLP_KIND, RESNET_KIND):
        raise SpecParseError(
            [SpecIssue("kind", f"unknown spec kind '{kind}'", _line_of(root_node, ("kind",)))]
        )

    data_stats = None
    raw_stats = data.pop("data", None)
    if raw_stats is not None:
        try:
            data_stats = DataStats.model_validate(raw_stats)
        except ValidationError as e:
            raise _located(e, root_node, prefix=("data",))

    model_type = ResNetSpec if kind == RESNET_KIND else NetworkSpec
    try:
        spec = model_type.model_validate(data)
    except ValidationError as e:
        raise _located(e, root_node)

    logger.debug(f"Parsed {kind} spec document")
    return SpecDocument(spec=spec, data=data_stats)


def serialize_spec(spec: NetworkSpec | ResNetSpec, data: Optional[DataStats] = None) -> str:
    """Writes the canonical YAML document for a spec (and optional data statistics)."""
    if isinstance(spec, ResNetSpec):
        document: dict[str, Any] = {
            "kind": RESNET_KIND,
            "stem": _stem_document(spec.stem),
            "blocks": [_block_document(block) for block in spec.blocks],
            "activation": spec.activation.to_document(),
            "fc_tail": [_layer_document(layer) for layer in spec.fc_tail],
            "output_max_norm": spec.output_max_norm,
        }
    else:
        document = {
            "kind": MLP_KIND,
            "input_dim": spec.input_dim,
            "input_keep_prob": spec.input_keep_prob,
            "input_dc_keep_prob": spec.input_dc_keep_prob,
            "hidden": [_layer_document(layer) for layer in spec.hidden],
            "output_max_norm": spec.output_max_norm,
        }
    if data is not None:
        document["data"] = {"radius": data.radius, "noise_radius": data.noise_radius}
    return yaml.safe_dump(document, sort_keys=False)


def spec_hash(spec: NetworkSpec | ResNetSpec) -> str:
    """SHA-256 of the canonical serialized spec."""
    return hashlib.sha256(serialize_spec(spec).encode("utf-8")).hexdigest()


def _load_yaml(text: str) -> tuple[yaml.Node, dict]:
    try:
        root_node = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as e:
        line = e.problem_mark.line + 1 if e.problem_mark is not None else None
        raise SpecParseError([SpecIssue("", f"malformed document: {e.problem}", line)])
    except yaml.YAMLError as e:
        # reader errors (control characters, bad encodings) carry no problem mark
        raise SpecParseError([SpecIssue("", f"malformed document: {e}")])

    if not isinstance(data, dict):
        raise SpecParseError([SpecIssue("", "document must be a mapping of spec fields", 1)])
    return root_node, data


def _located(error: ValidationError, root_node: yaml.Node, prefix: tuple = ()) -> SpecParseError:
    issues = []
    for issue, detail in zip(issues_from_validation_error(error), error.errors()):
        loc = prefix + tuple(detail["loc"])
        path = issue.path if not prefix else ".".join(str(p) for p in prefix) + "." + issue.path
        issues.append(SpecIssue(path=path, message=issue.message, line=_line_of(root_node, loc)))
    return SpecParseError(issues)


def _line_of(node: Optional[yaml.Node], loc: tuple) -> Optional[int]:
    """Resolves a field path to the 1-based line of the deepest node that exists."""
    if node is None:
        return None
    line = node.start_mark.line + 1
    for key in loc:
        if isinstance(node, yaml.MappingNode):
            for key_node, value_node in node.value:
                if key_node.value == key:
                    node = value_node
                    line = key_node.start_mark.line + 1
                    break
            else:
                return line
        elif isinstance(node, yaml.SequenceNode) and isinstance(key, int) and key < len(node.value):
            node = node.value[key]
            line = node.start_mark.line + 1
        else:
            return line
    return line


def _layer_document(layer: LayerSpec) -> dict:
    return {
        "width": layer.width,
        "activation": layer.activation.to_document(),
        "max_norm": layer.max_norm,
        "keep_prob": layer.keep_prob,
        "dc_keep_prob": layer.dc_keep_prob,
    }


def _stem_document(stem: StemSpec) -> dict:
    return {"max_norm": stem.max_norm, "filters": stem.filters, "filter_size": stem.filter_size}


def _block_document(block: BlockSpec) -> dict:
    document = _stem_document(block)
    document.update({"units": block.units, "stride": block.stride, "keep_prob": block.keep_prob})
    return document
