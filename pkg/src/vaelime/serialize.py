"""JSON model files for VAEs and black boxes.

One schema covers every kind. Dense layers are stored as
``{rows, cols, weights (row-major), bias, activation}``; a VAE lists its
encoder layers first, with ``encoder_layers`` marking the boundary.
Floats are written by ``json`` with the shortest round-trip repr.
"""

import json
from pathlib import Path

import jsonschema
import numpy as np

from vaelime import __version__, nnet
from vaelime.blackbox import AnalyticBlackBox, AnalyticSpec, MlpBlackBox
from vaelime.errors import SchemaError
from vaelime.vae import VaeModel

SCHEMA_VERSION = 1

_num_array = {"type": "array", "items": {"type": "number"}}

MODEL_SCHEMA = {
    "type": "object",
    "required": ["schema_version", "kind", "input_dim"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "kind": {"enum": ["vae", "mlp", "analytic"]},
        "input_dim": {"type": "integer", "minimum": 1},
        "latent_dim": {"type": "integer", "minimum": 1},
        "encoder_layers": {"type": "integer", "minimum": 1},
        "feature_names": {"type": "array", "items": {"type": "string"}},
        "standardization": {
            "type": "object",
            "required": ["means", "stds"],
            "properties": {"means": _num_array, "stds": _num_array},
        },
        "target_standardization": {
            "type": "object",
            "required": ["mean", "std"],
            "properties": {"mean": {"type": "number"}, "std": {"type": "number"}},
        },
        "latent_scale": _num_array,
        "layers": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["rows", "cols", "weights", "bias", "activation"],
                "properties": {
                    "rows": {"type": "integer", "minimum": 1},
                    "cols": {"type": "integer", "minimum": 1},
                    "weights": _num_array,
                    "bias": _num_array,
                    "activation": {"enum": list(nnet.ACTIVATIONS)},
                },
            },
        },
        "analytic": {
            "type": "object",
            "required": ["c1", "c2", "c3", "linear"],
            "properties": {
                "c1": {"type": "number"},
                "c2": {"type": "number"},
                "c3": {"type": "number"},
                "linear": _num_array,
            },
        },
    },
    "allOf": [
        {
            "if": {"properties": {"kind": {"const": "vae"}}},
            "then": {"required": ["latent_dim", "encoder_layers", "standardization", "layers"]},
        },
        {
            "if": {"properties": {"kind": {"const": "mlp"}}},
            "then": {"required": ["standardization", "target_standardization", "layers"]},
        },
        {
            "if": {"properties": {"kind": {"const": "analytic"}}},
            "then": {"required": ["analytic"]},
        },
    ],
}


def validate_model_dict(doc):
    try:
        jsonschema.validate(doc, MODEL_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise SchemaError(f"invalid model file: {exc.message}") from None
    for layer in doc.get("layers", []):
        if len(layer["weights"]) != layer["rows"] * layer["cols"] or len(layer["bias"]) != layer["rows"]:
            raise SchemaError("layer weights/bias lengths disagree with rows x cols")


def _layers_to_json(net):
    return [
        {
            "rows": layer.n_out,
            "cols": layer.n_in,
            "weights": layer.weights.reshape(-1).tolist(),
            "bias": layer.bias.tolist(),
            "activation": layer.activation,
        }
        for layer in net.layers
    ]


def _layers_from_json(items):
    return [
        nnet.Layer(
            np.array(item["weights"], dtype=float).reshape(item["rows"], item["cols"]),
            np.array(item["bias"], dtype=float),
            item["activation"],
        )
        for item in items
    ]


def model_to_dict(model, feature_names=None, config=None, seed=None):
    doc = {"schema_version": SCHEMA_VERSION}
    if isinstance(model, VaeModel):
        doc.update(
            kind="vae",
            input_dim=model.input_dim,
            latent_dim=model.latent_dim,
            encoder_layers=len(model.encoder.layers),
            standardization={"means": model.means.tolist(), "stds": model.stds.tolist()},
            layers=_layers_to_json(model.encoder) + _layers_to_json(model.decoder),
        )
        if model.latent_scale is not None:
            doc["latent_scale"] = model.latent_scale.tolist()
    elif isinstance(model, MlpBlackBox):
        doc.update(
            kind="mlp",
            input_dim=model.input_dim,
            standardization={"means": model.means.tolist(), "stds": model.stds.tolist()},
            target_standardization={"mean": model.target_mean, "std": model.target_std},
            layers=_layers_to_json(model.net),
        )
        if model.metrics:
            doc["metrics"] = model.metrics
    elif isinstance(model, AnalyticBlackBox):
        s = model.spec
        doc.update(
            kind="analytic",
            input_dim=model.input_dim,
            analytic={"c1": s.c1, "c2": s.c2, "c3": s.c3, "linear": list(s.linear)},
        )
    else:
        raise TypeError(f"cannot serialize {type(model).__name__}")
    if feature_names is not None:
        doc["feature_names"] = list(feature_names)
    doc["tool_version"] = __version__
    if config is not None:
        doc["config"] = config
    if seed is not None:
        doc["seed"] = seed
    return doc


def model_from_dict(doc):
    validate_model_dict(doc)
    kind = doc["kind"]
    if kind == "analytic":
        a = doc["analytic"]
        model = AnalyticBlackBox(AnalyticSpec(a["c1"], a["c2"], a["c3"], tuple(a["linear"])))
    else:
        layers = _layers_from_json(doc["layers"])
        std = doc["standardization"]
        if kind == "vae":
            cut = doc["encoder_layers"]
            model = VaeModel(
                encoder=nnet.DenseNet(layers[:cut]),
                decoder=nnet.DenseNet(layers[cut:]),
                means=std["means"],
                stds=std["stds"],
                latent_scale=doc.get("latent_scale"),
            )
            if model.latent_dim != doc["latent_dim"]:
                raise SchemaError("latent_dim disagrees with the encoder output width")
        else:
            t = doc["target_standardization"]
            model = MlpBlackBox(
                nnet.DenseNet(layers), std["means"], std["stds"], t["mean"], t["std"],
                metrics=doc.get("metrics"),
            )
    if model.input_dim != doc["input_dim"]:
        raise SchemaError("input_dim disagrees with the stored parameters")
    return model


def dumps(doc):
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def save_model(model, path, **meta):
    path = Path(path)
    path.write_text(dumps(model_to_dict(model, **meta)), encoding="utf-8")
    return path


def load_model(path):
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path} is not valid JSON: {exc}") from None
    return model_from_dict(doc)
