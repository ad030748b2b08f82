import json
import logging
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml
from pydantic import ValidationError

from capbound.model_spec.network_spec import NetworkSpec
from capbound.model_spec.parsing import MLP_KIND, serialize_spec, spec_hash
from capbound.net_engine.dense_net import DenseNet, ShapeError
from capbound.version import VERSION

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


class ModelFileError(ValueError):
    """Raised for unreadable, inconsistent or version-mismatched model files."""
    pass


def model_document(net: DenseNet, metadata: Optional[dict[str, Any]] = None) -> dict:
    """The versioned JSON-ready document of a trained net.

    Weights are stored row-major as nested lists; floats serialize through
    their shortest round-trip representation.

    :param net: The net to describe.
    :param metadata: Run information (seed, schedule, ...) kept alongside.
    """
    spec_document = yaml.safe_load(serialize_spec(net.spec))
    return {
        "format_version": FORMAT_VERSION,
        "tool_version": VERSION,
        "spec_hash": spec_hash(net.spec),
        "spec": spec_document,
        "weights": [w.tolist() for w in net.weights],
        "metadata": metadata or {},
    }


def save_model(path: str | Path, net: DenseNet, metadata: Optional[dict[str, Any]] = None) -> None:
    """Writes the model file; identical nets and metadata give identical bytes."""
    path = Path(path)
    try:
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            json.dump(model_document(net, metadata), f, ensure_ascii=False, indent=2)
            f.write("\n")
        logger.info(f"Saved model to {path}")
    except (TypeError, OSError) as e:
        logger.error(f"Failed to save model to {path}: {e}")
        raise


def load_model(path: str | Path) -> tuple[DenseNet, dict[str, Any]]:
    """Reads a model file back into a `DenseNet` and its metadata.

    :raises ModelFileError: If the file is missing, malformed, of another
        format version, or its weights do not match the stored spec.
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except FileNotFoundError:
        raise ModelFileError(f"model file not found: {path}")
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ModelFileError(f"model file {path} is not valid JSON: {e}")

    if not isinstance(document, dict):
        raise ModelFileError(f"model file {path} must hold a JSON object")
    version = document.get("format_version")
    if version != FORMAT_VERSION:
        raise ModelFileError(f"model file {path} has format version {version}, expected {FORMAT_VERSION}")

    try:
        spec_fields = dict(document["spec"])
        kind = spec_fields.pop("kind", MLP_KIND)
        if kind != MLP_KIND:
            raise ModelFileError(f"model file {path} describes a '{kind}' spec; only MLPs are trainable")
        spec = NetworkSpec.model_validate(spec_fields)
        net = DenseNet(spec, tuple(np.array(w, dtype=np.float64) for w in document["weights"]))
    except (KeyError, TypeError, ValueError, ValidationError, ShapeError) as e:
        if isinstance(e, ModelFileError):
            raise
        raise ModelFileError(f"model file {path} is inconsistent: {e}")

    stored_hash = document.get("spec_hash")
    if stored_hash != spec_hash(spec):
        raise ModelFileError(f"model file {path} spec hash does not match its spec")
    logger.info(f"Loaded model {path} (spec {stored_hash[:12]})")
    return net, document.get("metadata", {})
