"""
Causal decoupling of node classification into two mirrored causal models.

SCM-A treats the neighborhood representation a as treatment and the node
features x as confounder, SCM-X the other way round. Both share the
neighborhood embedding a (and the outcome logits m^a computed from it) that is
learned once by the encoder. Each model decomposes the outcome as
y = m(c) + g(c)' (h(t) - e(c)); the treatment effect of a node is the
product term g(c)' h(t) minus its average over a background sample.

Product terms are lifted to the logits space: per class c the o-dimensional
block c of a o*k output is paired with an o-dimensional vector.
"""
from dataclasses import dataclass, replace
from typing import List, Tuple, Sequence

import numpy as np

from decaf.config import ExperimentConfig, COUNTERFACTUAL_SHARED, COUNTERFACTUAL_OWN, COUNTERFACTUALS
from decaf.errors import DecafError, ShapeError, NumericError
from decaf.graph import GraphData, neighborhood_propagate
from decaf.logging import LoggableObject
from decaf.metrics import macro_f1
from decaf.numerics import Matrix, Tape, Mlp, init_mlp, glorot, mlp_on_tape, evaluate_with_gradients, softmax
from decaf.splits import SplitMasks
from decaf.training import Trainer, ParameterGroup, TrainingTrace

STAGE_ENCODER = "encoder"
STAGE_SCM_A_BASELINE = "scm-a/baseline"
STAGE_SCM_A = "scm-a"
STAGE_SCM_X = "scm-x"

GAMMA_GRID = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]

_STREAM_ENCODER = 1
_STREAM_SCM_A = 2
_STREAM_SCM_X = 3


def tile_matrix(o: int, k: int) -> Matrix:
    """
    The o x (o*k) matrix [I ... I] that repeats a row vector once per class.
    """
    return np.tile(np.eye(o), (1, k))


def block_sum_matrix(o: int, k: int) -> Matrix:
    """
    The (o*k) x k matrix that sums each block of o columns.
    """
    return np.kron(np.eye(k), np.ones((o, 1)))


def class_products(per_class: Matrix, vectors: Matrix) -> Matrix:
    """
    Per row i and class c the inner product of block c of per_class[i] with vectors[i].

    :param per_class: n x (o*k)
    :type per_class: np.ndarray
    :param vectors: n x o, or 1 x o to pair every row with the same vector
    :type vectors: np.ndarray
    :return: n x k
    :rtype: np.ndarray
    """
    o = vectors.shape[1]
    if per_class.shape[1] % o != 0:
        raise ShapeError("Per-class width %d is not a multiple of %d" % (per_class.shape[1], o))
    k = per_class.shape[1] // o
    return (per_class * (vectors @ tile_matrix(o, k))) @ block_sum_matrix(o, k)


@dataclass
class EncoderWeights:
    """
    The neighborhood encoder p (d x o, no bias) and the head p' (o x k plus bias).
    """
    weights: Matrix
    head_weights: Matrix
    head_bias: Matrix

    def parameters(self) -> List[Matrix]:
        return [self.weights, self.head_weights, self.head_bias]


@dataclass
class MaterializedShared:
    """
    The neighborhood embeddings a and their outcome logits m^a, read-only once created.
    """
    a: Matrix
    m_a_fixed: Matrix

    @property
    def g_x(self) -> Matrix:
        """
        g^X(a): the confounder representation of SCM-X.
        """
        return self.a

    @property
    def h_a(self) -> Matrix:
        """
        h^A(a): the treatment representation of SCM-A.
        """
        return self.a


@dataclass(frozen=True)
class DecafModel:
    """
    All trained parts of both causal models.
    """
    encoder: EncoderWeights
    m_a: Mlp
    g_a: Mlp
    e_a: Mlp
    h_x: Mlp
    e_x: Mlp
    gamma: float
    cf_samples: int
    hops: int
    hidden_dim: int
    num_classes: int
    counterfactual: str = COUNTERFACTUAL_SHARED

    def check(self, d: int):
        """
        Checks that all shapes agree with d features, o = hidden_dim and k classes.

        :param d: the number of node features
        :type d: int
        """
        o, k = self.hidden_dim, self.num_classes
        if not (0.0 <= self.gamma <= 1.0):
            raise DecafError("gamma must lie in [0, 1], got: %f" % self.gamma)
        if self.cf_samples < 1:
            raise DecafError("Need at least one background sample, got: %d" % self.cf_samples)
        if self.counterfactual not in COUNTERFACTUALS:
            raise DecafError("Unknown counterfactual mode: %s" % self.counterfactual)
        if self.encoder.weights.shape != (d, o):
            raise ShapeError("Encoder is %s, expected %s" % (str(self.encoder.weights.shape), str((d, o))))
        if (self.encoder.head_weights.shape != (o, k)) or (self.encoder.head_bias.shape != (1, k)):
            raise ShapeError("Head does not map %d to %d" % (o, k))
        expected = {
            "m_a": (self.m_a, d, k),
            "g_a": (self.g_a, d, o * k),
            "e_a": (self.e_a, d, o),
            "h_x": (self.h_x, d, o * k),
            "e_x": (self.e_x, o, o * k),
        }
        for name, (mlp, in_dim, out_dim) in expected.items():
            if (mlp.in_dim != in_dim) or (mlp.out_dim != out_dim):
                raise ShapeError("%s maps %d -> %d, expected %d -> %d" % (name, mlp.in_dim, mlp.out_dim, in_dim, out_dim))


@dataclass
class BackgroundSample:
    """
    The training nodes whose product terms stand in for the counterfactual outcome.
    """
    indices: np.ndarray
    seed: int


@dataclass
class Counterfactual:
    """
    The counterfactual outcomes of both branches, 1 x k (shared background) or
    n x k (own confounder), plus the sampled treatment representations.
    """
    sample: BackgroundSample
    cf_a: Matrix
    cf_x: Matrix
    mode: str
    background_a: Matrix
    background_h: Matrix

    def for_graph(self, model: 'DecafModel', shared: 'MaterializedShared', g: GraphData) -> Tuple[Matrix, Matrix]:
        """
        Returns the counterfactual outcomes for the nodes of g, which may
        differ from the graph the background was drawn from.

        :return: the tuple of cf_a and cf_x
        :rtype: tuple
        """
        if self.mode != COUNTERFACTUAL_OWN:
            return self.cf_a, self.cf_x
        cf_a = class_products(model.g_a.forward(g.features), self.background_a.mean(axis=0, keepdims=True))
        sampled_h = np.repeat(self.background_h.mean(axis=0, keepdims=True), g.n, axis=0)
        return cf_a, class_products(sampled_h, shared.g_x)


@dataclass
class EffectEstimates:
    """
    The per-node treatment effects in logits space, n x k each.
    """
    psi_x: Matrix
    psi_a: Matrix


@dataclass
class DecafFit:
    """
    The outcome of training: model, shared embeddings and the per-stage traces.
    """
    model: DecafModel
    shared: MaterializedShared
    traces: List[TrainingTrace]
    gamma_scores: dict = None


def _stream(config: ExperimentConfig, stream: int) -> np.random.Generator:
    return np.random.default_rng([config.get("seed"), stream])


def _validation_ids(masks: SplitMasks) -> np.ndarray:
    ids = np.flatnonzero(masks.val)
    if len(ids) == 0:
        ids = np.flatnonzero(masks.train)
    return ids


def _scorer(labels: np.ndarray, ids: np.ndarray, k: int):
    def score(logits: Matrix) -> float:
        return macro_f1(labels[ids], np.argmax(logits, axis=1), k)
    return score


def encoder_loss(params: Sequence[Matrix], propagated: Matrix, labels: Sequence[int]) -> Tuple[float, List[Matrix]]:
    """
    Cross-entropy of the head applied to the encoded neighborhoods.

    :param params: encoder weights, head weights, head bias
    :param propagated: the parameter-free neighborhood aggregation of the nodes, n x d
    :type propagated: np.ndarray
    :param labels: the labels of the nodes
    :return: loss and gradients
    :rtype: tuple
    """
    tape = Tape()
    x = tape.constant(propagated)
    w, wh, bh = [tape.parameter(p) for p in params]
    logits = tape.add_row(tape.matmul(tape.matmul(x, w), wh), bh)
    return evaluate_with_gradients(tape, tape.softmax_cross_entropy(logits, labels))


def baseline_loss(params: Sequence[Matrix], x: Matrix, labels: Sequence[int]) -> Tuple[float, List[Matrix]]:
    """
    Cross-entropy of the outcome model m(x).
    """
    tape = Tape()
    xi = tape.constant(x)
    p = [tape.parameter(v) for v in params]
    return evaluate_with_gradients(tape, tape.softmax_cross_entropy(mlp_on_tape(tape, p, xi), labels))


def propensity_loss(params: Sequence[Matrix], inputs: Matrix, targets: Matrix) -> Tuple[float, List[Matrix]]:
    """
    Mean squared distance between the treatment representations and e(c).

    :param params: the parameters of the propensity network e
    :param inputs: the confounders c
    :type inputs: np.ndarray
    :param targets: the treatment representations
    :type targets: np.ndarray
    :return: loss and gradients
    :rtype: tuple
    """
    tape = Tape()
    ci = tape.constant(inputs)
    p = [tape.parameter(v) for v in params]
    return evaluate_with_gradients(tape, tape.mean_squared_error(tape.constant(targets), mlp_on_tape(tape, p, ci)))


def effect_loss_a(params: Sequence[Matrix], x: Matrix, a: Matrix, m_logits: Matrix, propensity: Matrix,
                  labels: Sequence[int]) -> Tuple[float, List[Matrix]]:
    """
    Cross-entropy of m^A(x) + g^A(x)' (a - e^A(x)); gradients for g^A only.

    :param params: the parameters of g^A
    :param x: the node features
    :type x: np.ndarray
    :param a: the neighborhood embeddings
    :type a: np.ndarray
    :param m_logits: the frozen outcome logits m^A(x)
    :type m_logits: np.ndarray
    :param propensity: the frozen e^A(x)
    :type propensity: np.ndarray
    :param labels: the labels
    :return: loss and gradients
    :rtype: tuple
    """
    o, k = a.shape[1], m_logits.shape[1]
    tape = Tape()
    xi = tape.constant(x)
    p = [tape.parameter(v) for v in params]
    per_class = mlp_on_tape(tape, p, xi)
    residual = tape.constant((a - propensity) @ tile_matrix(o, k))
    correction = tape.matmul(tape.multiply(per_class, residual), tape.constant(block_sum_matrix(o, k)))
    logits = tape.add(tape.constant(m_logits), correction)
    return evaluate_with_gradients(tape, tape.softmax_cross_entropy(logits, labels))


def effect_loss_x(params: Sequence[Matrix], x: Matrix, a: Matrix, m_fixed: Matrix, propensity: Matrix,
                  labels: Sequence[int]) -> Tuple[float, List[Matrix]]:
    """
    Cross-entropy of m^a + a' (h^X(x) - e^X(a)); gradients for h^X only.

    :param params: the parameters of h^X
    :param x: the node features
    :type x: np.ndarray
    :param a: the neighborhood embeddings
    :type a: np.ndarray
    :param m_fixed: the frozen outcome logits of the encoder head
    :type m_fixed: np.ndarray
    :param propensity: the frozen e^X(a), n x (o*k)
    :type propensity: np.ndarray
    :param labels: the labels
    :return: loss and gradients
    :rtype: tuple
    """
    o, k = a.shape[1], m_fixed.shape[1]
    tape = Tape()
    xi = tape.constant(x)
    p = [tape.parameter(v) for v in params]
    residual = tape.sub(mlp_on_tape(tape, p, xi), tape.constant(propensity))
    tiled = tape.constant(a @ tile_matrix(o, k))
    correction = tape.matmul(tape.multiply(residual, tiled), tape.constant(block_sum_matrix(o, k)))
    logits = tape.add(tape.constant(m_fixed), correction)
    return evaluate_with_gradients(tape, tape.softmax_cross_entropy(logits, labels))


def train_encoder(g: GraphData, masks: SplitMasks, config: ExperimentConfig) -> Tuple[EncoderWeights, TrainingTrace]:
    """
    Pretrains the shared neighborhood encoder and its head with cross-entropy
    on the training nodes.

    :param g: the graph
    :type g: GraphData
    :param masks: the splits
    :type masks: SplitMasks
    :param config: the hyperparameters
    :type config: ExperimentConfig
    :return: the weights and the trace
    :rtype: tuple
    """
    train_ids = np.flatnonzero(masks.train)
    if len(train_ids) == 0:
        raise DecafError("Training mask is empty")
    rng = _stream(config, _STREAM_ENCODER)
    o, k = config.get("hidden"), g.num_classes
    propagated = neighborhood_propagate(g, config.get("layers"))
    init = [glorot(rng, g.d, o), glorot(rng, o, k), np.zeros((1, k))]
    score = _scorer(g.labels, _validation_ids(masks), k)
    val_inputs = propagated[_validation_ids(masks)]

    def objective(current, batch):
        return encoder_loss(current[0], propagated[batch], g.labels[batch])

    def validate(current):
        w, wh, bh = current[0]
        return score(val_inputs @ w @ wh + bh)

    best, trace = Trainer(STAGE_ENCODER, config).fit(
        [ParameterGroup("encoder", init, objective)], validate, train_ids, rng)
    return EncoderWeights(*best[0]), trace


def materialize_shared(encoder: EncoderWeights, g: GraphData, layers: int) -> MaterializedShared:
    """
    Computes a = p(X, A) and m^a = p'(a) once; the arrays are made read-only.

    :param encoder: the trained encoder
    :type encoder: EncoderWeights
    :param g: the graph
    :type g: GraphData
    :param layers: the number of hops
    :type layers: int
    :return: the shared embeddings
    :rtype: MaterializedShared
    """
    a = neighborhood_propagate(g, layers) @ encoder.weights
    m = a @ encoder.head_weights + encoder.head_bias
    a.flags.writeable = False
    m.flags.writeable = False
    return MaterializedShared(a=a, m_a_fixed=m)


def train_scm_a(g: GraphData, shared: MaterializedShared, masks: SplitMasks,
                config: ExperimentConfig) -> Tuple[Tuple[Mlp, Mlp, Mlp], List[TrainingTrace]]:
    """
    Trains the model with neighborhood treatment: first the outcome model m^A(x)
    on its own, then g^A and the propensity e^A alternately with m^A frozen.

    :param g: the graph
    :type g: GraphData
    :param shared: the shared embeddings
    :type shared: MaterializedShared
    :param masks: the splits
    :type masks: SplitMasks
    :param config: the hyperparameters
    :type config: ExperimentConfig
    :return: (m^A, g^A, e^A) and the traces of both stages
    :rtype: tuple
    """
    train_ids = np.flatnonzero(masks.train)
    val_ids = _validation_ids(masks)
    rng = _stream(config, _STREAM_SCM_A)
    o, k, hidden = shared.a.shape[1], g.num_classes, config.get("hidden")
    x, a, labels = g.features, shared.h_a, g.labels
    score = _scorer(labels, val_ids, k)
    m_init = init_mlp(rng, g.d, hidden, k)
    # effects start at zero, the propensity at the mean treatment
    g_init = init_mlp(rng, g.d, hidden, o * k, zero_output=True)
    e_init = init_mlp(rng, g.d, hidden, o, zero_output=True, output_bias=a[train_ids].mean(axis=0))

    def baseline_objective(current, batch):
        return baseline_loss(current[0], x[batch], labels[batch])

    best, baseline_trace = Trainer(STAGE_SCM_A_BASELINE, config).fit(
        [ParameterGroup("m_a", m_init.parameters(), baseline_objective)],
        lambda current: score(Mlp.from_parameters(current[0]).forward(x[val_ids])),
        train_ids, rng)
    m_a = Mlp.from_parameters(best[0])
    m_logits = m_a.forward(x)

    def effect_objective(current, batch):
        propensity = Mlp.from_parameters(current[1]).forward(x[batch])
        return effect_loss_a(current[0], x[batch], a[batch], m_logits[batch], propensity, labels[batch])

    def propensity_objective(current, batch):
        return propensity_loss(current[1], x[batch], a[batch])

    def validate(current):
        xv = x[val_ids]
        residual = a[val_ids] - Mlp.from_parameters(current[1]).forward(xv)
        return score(m_logits[val_ids] + class_products(Mlp.from_parameters(current[0]).forward(xv), residual))

    best, trace = Trainer(STAGE_SCM_A, config).fit(
        [ParameterGroup("g_a", g_init.parameters(), effect_objective, steps=config.get("step_ratio")),
         ParameterGroup("e_a", e_init.parameters(), propensity_objective)],
        validate, train_ids, rng)
    return (m_a, Mlp.from_parameters(best[0]), Mlp.from_parameters(best[1])), [baseline_trace, trace]


def train_scm_x(g: GraphData, shared: MaterializedShared, masks: SplitMasks,
                config: ExperimentConfig) -> Tuple[Tuple[Mlp, Mlp], TrainingTrace]:
    """
    Trains the model with feature treatment. Its outcome model is the frozen
    head output m^a and its confounder representation is a itself, so only
    h^X and the propensity e^X are learned, alternately.

    :param g: the graph
    :type g: GraphData
    :param shared: the shared embeddings
    :type shared: MaterializedShared
    :param masks: the splits
    :type masks: SplitMasks
    :param config: the hyperparameters
    :type config: ExperimentConfig
    :return: (h^X, e^X) and the trace
    :rtype: tuple
    """
    train_ids = np.flatnonzero(masks.train)
    val_ids = _validation_ids(masks)
    rng = _stream(config, _STREAM_SCM_X)
    o, k, hidden = shared.a.shape[1], g.num_classes, config.get("hidden")
    x, a, m_fixed, labels = g.features, shared.g_x, shared.m_a_fixed, g.labels
    score = _scorer(labels, val_ids, k)
    h_init = init_mlp(rng, g.d, hidden, o * k, zero_output=True)
    e_init = init_mlp(rng, o, hidden, o * k, zero_output=True)

    def effect_objective(current, batch):
        propensity = Mlp.from_parameters(current[1]).forward(a[batch])
        return effect_loss_x(current[0], x[batch], a[batch], m_fixed[batch], propensity, labels[batch])

    def propensity_objective(current, batch):
        targets = Mlp.from_parameters(current[0]).forward(x[batch])
        return propensity_loss(current[1], a[batch], targets)

    def validate(current):
        av = a[val_ids]
        residual = Mlp.from_parameters(current[0]).forward(x[val_ids]) - Mlp.from_parameters(current[1]).forward(av)
        return score(m_fixed[val_ids] + class_products(residual, av))

    best, trace = Trainer(STAGE_SCM_X, config).fit(
        [ParameterGroup("h_x", h_init.parameters(), effect_objective, steps=config.get("step_ratio")),
         ParameterGroup("e_x", e_init.parameters(), propensity_objective)],
        validate, train_ids, rng)
    return (Mlp.from_parameters(best[0]), Mlp.from_parameters(best[1])), trace


def factual_terms(model: DecafModel, shared: MaterializedShared, g: GraphData) -> Tuple[Matrix, Matrix]:
    """
    The factual product terms g^A(x_i)' h^A(a_i) and g^X(a_i)' h^X(x_i) of every node.

    :return: the tuple of the a-treatment and the x-treatment terms, n x k each
    :rtype: tuple
    """
    term_a = class_products(model.g_a.forward(g.features), shared.h_a)
    term_x = class_products(model.h_x.forward(g.features), shared.g_x)
    return term_a, term_x


def sample_background(train_mask: np.ndarray, k: int, seed: int) -> BackgroundSample:
    """
    Draws k training nodes, with replacement only if k exceeds the number of training nodes.
    """
    train_ids = np.flatnonzero(train_mask)
    if len(train_ids) == 0:
        raise DecafError("Cannot draw background sample without training nodes")
    if k < 1:
        raise DecafError("Need at least one background sample, got: %d" % k)
    rng = np.random.default_rng(seed)
    indices = rng.choice(train_ids, size=k, replace=k > len(train_ids))
    return BackgroundSample(indices=np.asarray(indices, dtype=np.int64), seed=seed)


def background_counterfactual(model: DecafModel, shared: MaterializedShared, g: GraphData,
                              train_mask: np.ndarray, seed: int) -> Counterfactual:
    """
    Estimates the counterfactual outcomes from a random background sample of
    training nodes. With the shared background the product terms of the sampled
    nodes are averaged (1 x k, identical for all nodes); with the own-confounder
    variant each node pairs its own confounder with the sampled treatments (n x k).

    :param model: the trained model
    :type model: DecafModel
    :param shared: the shared embeddings
    :type shared: MaterializedShared
    :param g: the graph
    :type g: GraphData
    :param train_mask: the nodes to sample from
    :type train_mask: np.ndarray
    :param seed: the seed for the sample
    :type seed: int
    :return: the counterfactual outcomes
    :rtype: Counterfactual
    """
    sample = sample_background(train_mask, model.cf_samples, seed)
    idx = sample.indices
    background_a = np.array(shared.h_a[idx])
    background_h = model.h_x.forward(g.features[idx])
    result = Counterfactual(sample=sample, cf_a=None, cf_x=None, mode=model.counterfactual,
                            background_a=background_a, background_h=background_h)
    if model.counterfactual == COUNTERFACTUAL_OWN:
        result.cf_a, result.cf_x = result.for_graph(model, shared, g)
    else:
        result.cf_a = class_products(model.g_a.forward(g.features[idx]), background_a).mean(axis=0, keepdims=True)
        result.cf_x = class_products(background_h, shared.g_x[idx]).mean(axis=0, keepdims=True)
    return result


def estimate_effects(model: DecafModel, shared: MaterializedShared, g: GraphData, cf: Counterfactual) -> EffectEstimates:
    """
    Factual minus counterfactual outcome per branch.

    :param model: the trained model
    :type model: DecafModel
    :param shared: the shared embeddings of g
    :type shared: MaterializedShared
    :param g: the graph to estimate the effects for
    :type g: GraphData
    :param cf: the counterfactual outcomes, possibly drawn from another graph
    :type cf: Counterfactual
    :return: the effects
    :rtype: EffectEstimates
    """
    term_a, term_x = factual_terms(model, shared, g)
    cf_a, cf_x = cf.for_graph(model, shared, g)
    result = EffectEstimates(psi_x=term_x - cf_x, psi_a=term_a - cf_a)
    if not (np.all(np.isfinite(result.psi_x)) and np.all(np.isfinite(result.psi_a))):
        raise NumericError("Non-finite treatment effects", -1)
    return result


def combine_effects(effects: EffectEstimates, gamma: float) -> Matrix:
    """
    softmax(gamma * psi_x + (1 - gamma) * psi_a).
    """
    return softmax(gamma * effects.psi_x + (1.0 - gamma) * effects.psi_a)


def predict_with_background(model: DecafModel, shared: MaterializedShared, g: GraphData,
                            cf: Counterfactual) -> Tuple[Matrix, np.ndarray]:
    """
    Class probabilities and predicted classes for the nodes of g given a background.
    """
    probs = combine_effects(estimate_effects(model, shared, g, cf), model.gamma)
    return probs, np.argmax(probs, axis=1)


def predict(model: DecafModel, shared: MaterializedShared, g: GraphData, train_mask: np.ndarray,
            seed: int) -> Tuple[Matrix, np.ndarray]:
    """
    Combines the effects of both branches into class probabilities.

    :param model: the trained model
    :type model: DecafModel
    :param shared: the shared embeddings of g
    :type shared: MaterializedShared
    :param g: the graph to predict
    :type g: GraphData
    :param train_mask: the nodes of g to draw the background from
    :type train_mask: np.ndarray
    :param seed: the seed of the background sample
    :type seed: int
    :return: the n x k probabilities and the predicted classes
    :rtype: tuple
    """
    return predict_with_background(model, shared, g, background_counterfactual(model, shared, g, train_mask, seed))


def select_gamma(model: DecafModel, shared: MaterializedShared, g: GraphData, masks: SplitMasks,
                 seed: int, grid: Sequence[float] = None) -> Tuple[DecafModel, dict]:
    """
    Picks the gamma with the best validation Macro-F1 (first one on ties).

    :return: the model with the chosen gamma and the score per gamma
    :rtype: tuple
    """
    if grid is None:
        grid = GAMMA_GRID
    val_ids = _validation_ids(masks)
    effects = estimate_effects(model, shared, g, background_counterfactual(model, shared, g, masks.train, seed))
    scores = dict()
    best_gamma, best_score = model.gamma, -np.inf
    for gamma in grid:
        pred = np.argmax(combine_effects(effects, gamma)[val_ids], axis=1)
        scores[gamma] = macro_f1(g.labels[val_ids], pred, g.num_classes)
        if scores[gamma] > best_score:
            best_gamma, best_score = gamma, scores[gamma]
    return replace(model, gamma=float(best_gamma)), scores


class DecafTrainer(LoggableObject):
    """
    Runs all stages: encoder, materialization, SCM-A, SCM-X and optionally the gamma selection.
    """

    def __init__(self, config: ExperimentConfig):
        self.config = config

    def train(self, g: GraphData, masks: SplitMasks) -> DecafFit:
        """
        Trains the full model on the graph.

        :param g: the training graph
        :type g: GraphData
        :param masks: the splits of the training graph
        :type masks: SplitMasks
        :return: the trained model and its traces
        :rtype: DecafFit
        """
        config = self.config
        masks.check()
        encoder, encoder_trace = train_encoder(g, masks, config)
        shared = materialize_shared(encoder, g, config.get("layers"))
        (m_a, g_a, e_a), scm_a_traces = train_scm_a(g, shared, masks, config)
        (h_x, e_x), scm_x_trace = train_scm_x(g, shared, masks, config)
        model = DecafModel(
            encoder=encoder, m_a=m_a, g_a=g_a, e_a=e_a, h_x=h_x, e_x=e_x,
            gamma=config.get("gamma"), cf_samples=config.get("cf_samples"), hops=config.get("layers"),
            hidden_dim=config.get("hidden"), num_classes=g.num_classes,
            counterfactual=config.get("counterfactual"))
        model.check(g.d)
        traces = [encoder_trace] + scm_a_traces + [scm_x_trace]
        if config.is_debug:
            for trace in traces:
                self.log("%s: %d epochs, best val Macro-F1 %.4f in epoch %d"
                         % (trace.stage, trace.epochs, trace.best_score, trace.best_epoch))
        gamma_scores = None
        if config.get("tune_gamma"):
            model, gamma_scores = select_gamma(model, shared, g, masks, config.get("seed"))
            if config.is_debug:
                self.log("selected gamma: %.1f" % model.gamma)
        return DecafFit(model=model, shared=shared, traces=traces, gamma_scores=gamma_scores)


def shared_for_graph(model: DecafModel, g: GraphData) -> MaterializedShared:
    """
    Encodes another graph (e.g., a shifted test graph) with the trained encoder.
    """
    model.check(g.d)
    return materialize_shared(model.encoder, g, model.hops)
