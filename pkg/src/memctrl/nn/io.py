"""JSON checkpoints: layer list with shapes and row-major parameter arrays."""
from __future__ import annotations

import json

import numpy as np

from .layers import LSTM, Dense, ShapeError
from .net import Network

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def layer_to_dict(layer) -> dict:
    d = layer.spec()
    d["W"] = layer.W.ravel().tolist()
    d["W_shape"] = list(layer.W.shape)
    if getattr(layer, "b", None) is not None and (layer.kind == "lstm" or layer.bias):
        d["b"] = layer.b.tolist()
    return d


def layer_from_dict(d: dict):
    kind = d.get("type")
    if kind == "dense":
        layer = Dense(d["in"], d["out"], d["activation"], bias=d.get("bias", True))
    elif kind == "lstm":
        layer = LSTM(d["in"], d["hidden"])
    else:
        raise CheckpointError(f"unknown layer type {kind!r}")
    W = np.asarray(d["W"], dtype=float)
    if list(d.get("W_shape", [])) != list(layer.W.shape) or W.size != layer.W.size:
        raise CheckpointError(f"weight shape mismatch for {kind} layer: "
                              f"stored {d.get('W_shape')}, expected {list(layer.W.shape)}")
    layer.W[...] = W.reshape(layer.W.shape)
    if "b" in d:
        b = np.asarray(d["b"], dtype=float)
        if b.shape != layer.b.shape:
            raise CheckpointError(f"bias shape mismatch for {kind} layer")
        layer.b[...] = b
    return layer


def network_to_dict(net: Network) -> dict:
    return {"layers": [layer_to_dict(layer) for layer in net.layers]}


def network_from_dict(d: dict) -> Network:
    try:
        return Network([layer_from_dict(x) for x in d["layers"]])
    except ShapeError as exc:
        raise CheckpointError(str(exc)) from exc


def dump_checkpoint(path, kind: str, payload: dict, meta: dict | None = None):
    doc = {"format_version": FORMAT_VERSION, "kind": kind, "meta": meta or {}}
    doc.update(payload)
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return path


def load_checkpoint(path) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"unsupported checkpoint format {doc.get('format_version')!r}")
    return doc
