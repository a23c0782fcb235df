"""JSON checkpoints for fitted models and Z-predictors.

Layout (``format_version`` 1)::

    {
      "format": "armed-checkpoint",
      "format_version": 1,
      "kind": "armed_model" | "zpredictor",
      ...kind-specific fields...
    }

An ``armed_model`` stores ``variant``, ``re_mode``, ``n_features``,
``n_clusters``, layer widths, ``lambda_g``/``lambda_K``/``lambda_F``,
``sigma_p``, ``networks`` (``fixed`` and, if present, ``adversary``, each a
list of ``{"weights", "bias", "activation"}``), ``random_effects`` (name ->
``{"mu", "rho"}``) and an optional nested ``zpredictor`` record.  Floats are
written with full repr precision so a load reproduces predictions exactly.
"""

from __future__ import annotations

import json
import os

import numpy as np

from .errors import InputError
from .model import ArmedModel
from .numcore import DenseLayer, Network
from .zpredictor import ZPredictor

FORMAT = "armed-checkpoint"
FORMAT_VERSION = 1


def _net_to_dict(net):
    return [{"weights": l.weights.tolist(), "bias": l.bias.tolist(), "activation": l.activation}
            for l in net.layers]


def _net_from_dict(layers):
    return Network([DenseLayer(np.array(l["weights"], dtype=float).reshape(len(l["weights"]), -1),
                               np.array(l["bias"], dtype=float), l["activation"]) for l in layers])


def zpredictor_to_dict(zp):
    return {
        "format": FORMAT, "format_version": FORMAT_VERSION, "kind": "zpredictor",
        "n_features": zp.n_features, "n_clusters": zp.n_clusters, "hidden": list(zp.hidden),
        "network": _net_to_dict(zp.net),
    }


def zpredictor_from_dict(d):
    _check_header(d, "zpredictor")
    zp = ZPredictor(d["n_features"], d["n_clusters"], d["hidden"])
    zp.net = _net_from_dict(d["network"])
    zp.trained = True
    return zp


def model_to_dict(model):
    d = {
        "format": FORMAT, "format_version": FORMAT_VERSION, "kind": "armed_model",
        "variant": model.variant, "re_mode": model.re_mode,
        "n_features": model.n_features, "n_clusters": model.n_clusters,
        "hidden": list(model.hidden), "adversary_hidden": list(model.adversary_hidden),
        "lambda_g": model.lambda_g, "lambda_K": model.lambda_K, "lambda_F": model.lambda_F,
        "sigma_p": model.sigma_p,
        "networks": {"fixed": _net_to_dict(model.fixed)},
        "random_effects": {},
        "zpredictor": None,
    }
    if model.adversary is not None:
        d["networks"]["adversary"] = _net_to_dict(model.adversary)
    if model.re_head is not None:
        d["random_effects"] = {k: {"mu": vg.mu.tolist(), "rho": vg.rho.tolist()}
                               for k, vg in model.re_head.vars.items()}
    if model.zpredictor is not None:
        d["zpredictor"] = zpredictor_to_dict(model.zpredictor)
    return d


def model_from_dict(d):
    _check_header(d, "armed_model")
    model = ArmedModel(d["n_features"], d["n_clusters"], d["variant"], d["re_mode"],
                       d["lambda_g"], d["lambda_K"], d["lambda_F"], d["sigma_p"],
                       hidden=d["hidden"], adversary_hidden=d["adversary_hidden"])
    model.fixed = _net_from_dict(d["networks"]["fixed"])
    if "adversary" in d["networks"]:
        model.adversary = _net_from_dict(d["networks"]["adversary"])
    for name, rec in d["random_effects"].items():
        vg = model.re_head.vars[name]
        vg.mu = np.array(rec["mu"], dtype=float).reshape(vg.mu.shape)
        vg.rho = np.array(rec["rho"], dtype=float).reshape(vg.rho.shape)
    if d.get("zpredictor"):
        model.zpredictor = zpredictor_from_dict(d["zpredictor"])
    return model


def _check_header(d, kind):
    if d.get("format") != FORMAT:
        raise InputError("not an armed checkpoint")
    if d.get("format_version") != FORMAT_VERSION:
        raise InputError(f"unsupported checkpoint version {d.get('format_version')!r}")
    if d.get("kind") != kind:
        raise InputError(f"checkpoint holds {d.get('kind')!r}, expected {kind!r}")


def save(obj, path):
    d = zpredictor_to_dict(obj) if isinstance(obj, ZPredictor) else model_to_dict(obj)
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        json.dump(d, fh)
    os.replace(tmp, path)


def load(path):
    with open(path) as fh:
        d = json.load(fh)
    if d.get("kind") == "zpredictor":
        return zpredictor_from_dict(d)
    return model_from_dict(d)
