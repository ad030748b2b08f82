import json

import numpy as np
import pytest

from capbound.net_engine.dense_net import init_net
from capbound.persistence.model_store import FORMAT_VERSION, ModelFileError, load_model, model_document, save_model
from helpers import mlp


@pytest.fixture
def net():
    return init_net(mlp(3, widths=(4, 2), activation="tanh", max_norm=1.5, output_max_norm=2.0, keep_prob=0.8), 5)


class TestModelStore:
    def test_round_trip_is_exact(self, tmp_path, net):
        path = tmp_path / "model.json"
        save_model(path, net, {"seed": 5, "objective": "hinge"})
        loaded, metadata = load_model(path)
        assert loaded.spec == net.spec
        assert all(np.array_equal(a, b) for a, b in zip(loaded.weights, net.weights))
        assert metadata == {"seed": 5, "objective": "hinge"}

    def test_same_net_same_bytes(self, tmp_path, net):
        first, second = tmp_path / "a.json", tmp_path / "b.json"
        save_model(first, net, {"seed": 1})
        save_model(second, net, {"seed": 1})
        assert first.read_bytes() == second.read_bytes()

    def test_document_header(self, net):
        document = model_document(net)
        assert document["format_version"] == FORMAT_VERSION
        assert document["spec"]["kind"] == "mlp"
        assert document["metadata"] == {}

    def test_other_format_version(self, tmp_path, net):
        document = model_document(net)
        document["format_version"] = FORMAT_VERSION + 1
        path = tmp_path / "model.json"
        path.write_text(json.dumps(document), encoding="utf-8")
        with pytest.raises(ModelFileError, match="format version"):
            load_model(path)

    def test_tampered_spec(self, tmp_path, net):
        document = model_document(net)
        document["spec"]["output_max_norm"] = 3.0
        path = tmp_path / "model.json"
        path.write_text(json.dumps(document), encoding="utf-8")
        with pytest.raises(ModelFileError, match="hash"):
            load_model(path)

    def test_weights_that_do_not_fit_the_spec(self, tmp_path, net):
        document = model_document(net)
        document["weights"] = document["weights"][:-1]
        path = tmp_path / "model.json"
        path.write_text(json.dumps(document), encoding="utf-8")
        with pytest.raises(ModelFileError):
            load_model(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ModelFileError, match="not found"):
            load_model(tmp_path / "absent.json")

    def test_malformed_json(self, tmp_path):
        path = tmp_path / "model.json"
        path.write_text("{not json", encoding="utf-8")
        with pytest.raises(ModelFileError, match="not valid JSON"):
            load_model(path)
