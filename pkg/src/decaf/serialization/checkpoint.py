"""
JSON checkpoints of trained models.
"""
import json
from typing import Dict, Tuple, Union

import numpy as np

from decaf.causal import DecafModel, EncoderWeights
from decaf.errors import ParseError, DecafError
from decaf.graph import BackboneModel
from decaf.numerics import Mlp
from decaf.serialization.objects import add_dict_writer, add_dict_reader, to_dict, from_dict

CHECKPOINT_FORMAT = "decaf-checkpoint"
CHECKPOINT_VERSION = 1

KIND_DECAF = "decaf"
KIND_ERM = "erm"


def _mlp_to_dict(m: Mlp) -> Dict:
    return {"layers": [to_dict(p) for p in m.parameters()]}


def _mlp_from_dict(d: Dict) -> Mlp:
    return Mlp.from_parameters([from_dict(np.ndarray, p) for p in d["layers"]])


def _encoder_to_dict(e: EncoderWeights) -> Dict:
    return {
        "weights": to_dict(e.weights),
        "head_weights": to_dict(e.head_weights),
        "head_bias": to_dict(e.head_bias),
    }


def _encoder_from_dict(d: Dict) -> EncoderWeights:
    return EncoderWeights(
        weights=from_dict(np.ndarray, d["weights"]),
        head_weights=from_dict(np.ndarray, d["head_weights"]),
        head_bias=from_dict(np.ndarray, d["head_bias"]))


_DECAF_NETWORKS = ["m_a", "g_a", "e_a", "h_x", "e_x"]


def _decaf_to_dict(m: DecafModel) -> Dict:
    result = {
        "encoder": to_dict(m.encoder),
        "gamma": m.gamma,
        "cf_samples": m.cf_samples,
        "hops": m.hops,
        "hidden_dim": m.hidden_dim,
        "num_classes": m.num_classes,
        "counterfactual": m.counterfactual,
    }
    for name in _DECAF_NETWORKS:
        result[name] = to_dict(getattr(m, name))
    return result


def _decaf_from_dict(d: Dict) -> DecafModel:
    networks = {name: from_dict(Mlp, d[name]) for name in _DECAF_NETWORKS}
    return DecafModel(
        encoder=from_dict(EncoderWeights, d["encoder"]),
        gamma=float(d["gamma"]), cf_samples=int(d["cf_samples"]), hops=int(d["hops"]),
        hidden_dim=int(d["hidden_dim"]), num_classes=int(d["num_classes"]),
        counterfactual=d["counterfactual"], **networks)


def _backbone_to_dict(m: BackboneModel) -> Dict:
    return {"kind": m.kind, "hops": m.hops, "weights": [to_dict(w) for w in m.weights]}


def _backbone_from_dict(d: Dict) -> BackboneModel:
    return BackboneModel(kind=d["kind"], hops=int(d["hops"]),
                         weights=[from_dict(np.ndarray, w) for w in d["weights"]])


add_dict_writer(Mlp, _mlp_to_dict)
add_dict_reader(Mlp, _mlp_from_dict)
add_dict_writer(EncoderWeights, _encoder_to_dict)
add_dict_reader(EncoderWeights, _encoder_from_dict)
add_dict_writer(DecafModel, _decaf_to_dict)
add_dict_reader(DecafModel, _decaf_from_dict)
add_dict_writer(BackboneModel, _backbone_to_dict)
add_dict_reader(BackboneModel, _backbone_from_dict)


def save_checkpoint(model: Union[DecafModel, BackboneModel], path: str, fingerprint: str):
    """
    Writes the model with all weights, shapes and the config fingerprint.

    :param model: the trained model
    :param path: the JSON file to write
    :type path: str
    :param fingerprint: the fingerprint of the config the model was trained with
    :type fingerprint: str
    """
    kind = KIND_DECAF if isinstance(model, DecafModel) else KIND_ERM
    d = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "kind": kind,
        "fingerprint": fingerprint,
        "model": to_dict(model),
    }
    with open(path, "w") as fp:
        json.dump(d, fp, sort_keys=True)
        fp.write("\n")


def load_checkpoint(path: str) -> Tuple[Union[DecafModel, BackboneModel], str]:
    """
    Reads a checkpoint.

    :param path: the JSON file
    :type path: str
    :return: the model and the config fingerprint
    :rtype: tuple
    """
    try:
        with open(path, "r", encoding="utf-8") as fp:
            d = json.load(fp)
    except json.JSONDecodeError as e:
        raise ParseError(path, e.lineno, e.msg)
    except ValueError as e:
        raise ParseError(path, None, str(e))
    except OSError as e:
        raise ParseError(path, None, str(e))
    if not isinstance(d, dict):
        raise ParseError(path, None, "expected a JSON object, got: %s" % type(d).__name__)
    if d.get("format") != CHECKPOINT_FORMAT:
        raise ParseError(path, None, "not a checkpoint: %s" % str(d.get("format")))
    if d.get("version") != CHECKPOINT_VERSION:
        raise ParseError(path, None, "unsupported version: %s" % str(d.get("version")))
    cls = DecafModel if d.get("kind") == KIND_DECAF else BackboneModel
    try:
        model = from_dict(cls, d["model"])
    except (KeyError, TypeError, ValueError, AttributeError, DecafError) as e:
        raise ParseError(path, None, "malformed model: %s" % str(e))
    return model, d.get("fingerprint", "")
