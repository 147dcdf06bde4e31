"""Versioned JSON model persistence with base64 numeric blocks.

Arrays round-trip bit-exactly, so reloaded models reproduce predictions
exactly. The format is human-inspectable and diff-friendly; documents
carry no timestamps so identical runs serialize byte-identically.
"""

from __future__ import annotations

import base64
import json

import numpy as np

from .ensemble import BaggingEnsemble, StackingEnsemble, VotingEnsemble
from .learners import (
    AdaBoostModel,
    DecisionTreeModel,
    GradientBoostingModel,
    LogisticRegressionModel,
    RandomForestModel,
)
from .neural import FfnModel, KanModel

FORMAT_VERSION = 1

MODEL_KINDS = {
    "logistic_regression": LogisticRegressionModel,
    "decision_tree": DecisionTreeModel,
    "random_forest": RandomForestModel,
    "gradient_boosting": GradientBoostingModel,
    "adaboost": AdaBoostModel,
    "voting": VotingEnsemble,
    "bagging": BaggingEnsemble,
    "stacking": StackingEnsemble,
    "ffn": FfnModel,
    "kan": KanModel,
}
_KIND_BY_CLASS = {cls: kind for kind, cls in MODEL_KINDS.items()}


def encode_array(arr) -> dict:
    arr = np.ascontiguousarray(arr)
    return {
        "dtype": str(arr.dtype),
        "shape": list(arr.shape),
        "data": base64.b64encode(arr.tobytes()).decode("ascii"),
    }


def decode_array(obj) -> np.ndarray:
    raw = np.frombuffer(base64.b64decode(obj["data"]), dtype=np.dtype(obj["dtype"]))
    return raw.reshape(obj["shape"]).copy()


def model_kind(model) -> str:
    try:
        return _KIND_BY_CLASS[type(model)]
    except KeyError:
        raise TypeError(f"{type(model).__name__} is not a serializable model") from None


def model_to_doc(model) -> dict:
    return {"kind": model_kind(model), "payload": model.to_payload()}


def model_from_doc(doc: dict):
    kind = doc["kind"]
    if kind not in MODEL_KINDS:
        raise ValueError(f"unknown model kind {kind!r}")
    return MODEL_KINDS[kind].from_payload(doc["payload"])


def dumps_canonical(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, indent=1)


def save_model(model, path, meta: dict | None = None) -> None:
    doc = {"format_version": FORMAT_VERSION, "meta": meta or {}}
    doc.update(model_to_doc(model))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_canonical(doc))


def load_model(path):
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format_version {doc.get('format_version')!r}")
    return model_from_doc(doc)
