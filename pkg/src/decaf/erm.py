"""
Empirical risk minimization of a plain GNN backbone, the baseline for the
causal pipeline.
"""
from typing import List, Sequence, Tuple

import numpy as np

from decaf.config import ExperimentConfig
from decaf.errors import DecafError
from decaf.graph import (GraphData, BackboneModel, BACKBONE_SGC, BACKBONE_GCN, init_backbone, backbone_forward,
                         normalize_adjacency, propagate_features)
from decaf.metrics import macro_f1
from decaf.numerics import Matrix, Tape, evaluate_with_gradients, softmax
from decaf.splits import SplitMasks
from decaf.training import Trainer, ParameterGroup, TrainingTrace

STAGE_ERM = "erm"

_STREAM_ERM = 4


def sgc_loss(weights: Sequence[Matrix], propagated: Matrix, labels: Sequence[int]) -> Tuple[float, List[Matrix]]:
    """
    Cross-entropy of S^k X theta, with S^k X precomputed for the batch rows.
    """
    tape = Tape()
    theta = tape.parameter(weights[0])
    logits = tape.matmul(tape.constant(propagated), theta)
    return evaluate_with_gradients(tape, tape.softmax_cross_entropy(logits, labels))


def gcn_loss(weights: Sequence[Matrix], g: GraphData, adjacency, ids: np.ndarray) -> Tuple[float, List[Matrix]]:
    """
    Cross-entropy of S relu(S X W1) W2 on the nodes ids; only their rows of the
    final propagation are computed.

    :param weights: W1 and W2
    :param g: the graph
    :type g: GraphData
    :param adjacency: the normalized adjacency S
    :param ids: the nodes to compute the loss on
    :type ids: np.ndarray
    :return: loss and gradients
    :rtype: tuple
    """
    tape = Tape()
    w1, w2 = [tape.parameter(w) for w in weights]
    hidden = tape.relu(tape.propagate(adjacency, tape.matmul(tape.constant(g.features), w1)))
    logits = tape.propagate(adjacency[ids], tape.matmul(hidden, w2))
    return evaluate_with_gradients(tape, tape.softmax_cross_entropy(logits, g.labels[ids]))


def train_erm(g: GraphData, masks: SplitMasks, kind: str, config: ExperimentConfig) -> Tuple[BackboneModel, TrainingTrace]:
    """
    Trains the backbone with cross-entropy on the training nodes and early
    stopping on the validation Macro-F1.

    :param g: the graph
    :type g: GraphData
    :param masks: the splits
    :type masks: SplitMasks
    :param kind: the backbone, sgc or gcn
    :type kind: str
    :param config: the hyperparameters (layers are the SGC hops, hidden the GCN width)
    :type config: ExperimentConfig
    :return: the trained backbone and the trace
    :rtype: tuple
    """
    masks.check()
    train_ids = np.flatnonzero(masks.train)
    if len(train_ids) == 0:
        raise DecafError("Training mask is empty")
    val_ids = np.flatnonzero(masks.val)
    if len(val_ids) == 0:
        val_ids = train_ids
    rng = np.random.default_rng([config.get("seed"), _STREAM_ERM])
    model = init_backbone(kind, g.d, g.num_classes, config.get("layers"), config.get("hidden"), rng)

    if kind == BACKBONE_SGC:
        propagated = propagate_features(g, model.hops)

        def objective(current, batch):
            return sgc_loss(current[0], propagated[batch], g.labels[batch])
    elif kind == BACKBONE_GCN:
        adjacency = normalize_adjacency(g, self_loops=True)

        def objective(current, batch):
            return gcn_loss(current[0], g, adjacency, batch)
    else:
        raise DecafError("Unknown backbone: %s" % kind)

    def validate(current):
        logits = backbone_forward(BackboneModel(kind=kind, hops=model.hops, weights=current[0]), g)
        return macro_f1(g.labels[val_ids], np.argmax(logits[val_ids], axis=1), g.num_classes)

    best, trace = Trainer(STAGE_ERM, config).fit(
        [ParameterGroup(kind, model.weights, objective)], validate, train_ids, rng)
    return BackboneModel(kind=kind, hops=model.hops, weights=best[0]), trace


def predict_erm(model: BackboneModel, g: GraphData) -> Tuple[Matrix, np.ndarray]:
    """
    Softmax probabilities and argmax classes of the backbone.

    :param model: the trained backbone
    :type model: BackboneModel
    :param g: the graph
    :type g: GraphData
    :return: the probabilities and classes
    :rtype: tuple
    """
    probs = softmax(backbone_forward(model, g))
    return probs, np.argmax(probs, axis=1)
