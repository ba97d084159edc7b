import json

import numpy as np
import pytest

from vaelime import serialize, vae
from vaelime.blackbox import AnalyticBlackBox, default_analytic_spec, train_mlp_regressor, MlpConfig
from vaelime.dataio import SynthConfig, generate
from vaelime.errors import SchemaError


@pytest.fixture(scope="module")
def data():
    return generate(SynthConfig(n_rows=400, n_features=6, latent_rank=2), seed=0)


def test_vae_round_trip(tmp_path, data):
    model = vae.train_vae(data, vae.VaeTrainConfig(epochs=3))
    path = serialize.save_model(model, tmp_path / "vae.json", feature_names=data.feature_names, seed=0)
    back = serialize.load_model(path)
    x = data.rows[:5]
    for a, b in zip(vae.encode(model, x), vae.encode(back, x)):
        assert a.tobytes() == b.tobytes()
    z = np.array([0.1, -0.3])
    assert vae.decode(model, z).tobytes() == vae.decode(back, z).tobytes()
    np.testing.assert_array_equal(back.latent_scale, model.latent_scale)
    doc = json.loads(path.read_text())
    assert doc["kind"] == "vae" and doc["latent_dim"] == 2 and doc["tool_version"]


def test_mlp_round_trip(tmp_path, data):
    box = train_mlp_regressor(data, config=MlpConfig(epochs=3))
    back = serialize.load_model(serialize.save_model(box, tmp_path / "bb.json"))
    assert back.predict(data.rows).tobytes() == box.predict(data.rows).tobytes()
    assert back.metrics == box.metrics


def test_analytic_round_trip(tmp_path):
    box = AnalyticBlackBox(default_analytic_spec(7))
    back = serialize.load_model(serialize.save_model(box, tmp_path / "a.json"))
    assert back.spec == box.spec


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.pop("kind"),
        lambda d: d.update(schema_version=99),
        lambda d: d["layers"][0].update(rows=d["layers"][0]["rows"] + 1),
        lambda d: d["layers"][0].update(activation="relu"),
        lambda d: d.pop("standardization"),
        lambda d: d.update(input_dim=d["input_dim"] + 1),
    ],
)
def test_schema_violations(data, mutate):
    doc = serialize.model_to_dict(vae.train_vae(data, vae.VaeTrainConfig(epochs=1)))
    mutate(doc)
    with pytest.raises(SchemaError):
        serialize.model_from_dict(doc)


def test_invalid_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{not json")
    with pytest.raises(SchemaError):
        serialize.load_model(p)
