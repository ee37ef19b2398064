import math

import numpy as np
import pytest

from decaf.causal import (DecafModel, EncoderWeights, EffectEstimates, class_products, encoder_loss, baseline_loss,
                          propensity_loss, effect_loss_a, effect_loss_x, train_encoder, materialize_shared,
                          train_scm_a, train_scm_x, factual_terms, sample_background, background_counterfactual,
                          estimate_effects, combine_effects, predict, select_gamma, DecafTrainer, shared_for_graph,
                          GAMMA_GRID, STAGE_ENCODER, STAGE_SCM_A_BASELINE, STAGE_SCM_A, STAGE_SCM_X)
from decaf.config import COUNTERFACTUAL_OWN, COUNTERFACTUAL_SHARED
from decaf.errors import DecafError, ShapeError
from decaf.graph import GraphData, neighborhood_propagate
from decaf.numerics import (Mlp, init_adam, adam_step, init_mlp, numerical_gradients, relative_error,
                            softmax_cross_entropy)
from decaf.splits import random_split


def _mlp(rng, in_dim, hidden, out_dim) -> Mlp:
    return Mlp(w1=rng.standard_normal((in_dim, hidden)), b1=rng.standard_normal((1, hidden)),
               w2=rng.standard_normal((hidden, out_dim)), b2=rng.standard_normal((1, out_dim)))


def _model(d, o, k, hidden=3, gamma=0.5, cf_samples=3, counterfactual=COUNTERFACTUAL_SHARED, seed=0) -> DecafModel:
    rng = np.random.default_rng(seed)
    return DecafModel(
        encoder=EncoderWeights(rng.standard_normal((d, o)), rng.standard_normal((o, k)), rng.standard_normal((1, k))),
        m_a=_mlp(rng, d, hidden, k), g_a=_mlp(rng, d, hidden, o * k), e_a=_mlp(rng, d, hidden, o),
        h_x=_mlp(rng, d, hidden, o * k), e_x=_mlp(rng, o, hidden, o * k),
        gamma=gamma, cf_samples=cf_samples, hops=2, hidden_dim=o, num_classes=k, counterfactual=counterfactual)


def _block_dot(per_class, vector, c):
    o = len(vector)
    return float(np.dot(per_class[c * o:(c + 1) * o], vector))


def _check_gradients(fn, params):
    _, grads = fn(params)
    numeric = numerical_gradients(lambda ps: fn(ps)[0], params)
    for g, n in zip(grads, numeric):
        assert relative_error(g, n) <= 1e-4


def test_class_products_match_loop():
    rng = np.random.default_rng(0)
    per_class = rng.standard_normal((4, 6))
    vectors = rng.standard_normal((4, 2))
    result = class_products(per_class, vectors)
    for i in range(4):
        for c in range(3):
            assert result[i, c] == pytest.approx(_block_dot(per_class[i], vectors[i], c), abs=1e-12)
    with pytest.raises(ShapeError):
        class_products(per_class, rng.standard_normal((4, 4)))


def test_class_products_broadcast_single_vector():
    rng = np.random.default_rng(1)
    per_class = rng.standard_normal((5, 6))
    v = rng.standard_normal((1, 3))
    np.testing.assert_allclose(class_products(per_class, v), class_products(per_class, np.repeat(v, 5, axis=0)))


def test_encoder_loss_gradients():
    rng = np.random.default_rng(2)
    propagated = rng.standard_normal((6, 4))
    params = [rng.standard_normal((4, 3)), rng.standard_normal((3, 2)), rng.standard_normal((1, 2))]
    _check_gradients(lambda ps: encoder_loss(ps, propagated, [0, 1, 1, 0, 1, 0]), params)


def test_baseline_loss_gradients():
    rng = np.random.default_rng(3)
    x = rng.standard_normal((5, 3))
    _check_gradients(lambda ps: baseline_loss(ps, x, [0, 2, 1, 1, 0]), _mlp(rng, 3, 4, 3).parameters())


def test_propensity_loss_gradients():
    rng = np.random.default_rng(4)
    inputs = rng.standard_normal((5, 3))
    targets = rng.standard_normal((5, 2))
    _check_gradients(lambda ps: propensity_loss(ps, inputs, targets), _mlp(rng, 3, 4, 2).parameters())


def test_effect_loss_a_gradients():
    rng = np.random.default_rng(5)
    n, d, o, k = 6, 3, 2, 3
    x, a = rng.standard_normal((n, d)), rng.standard_normal((n, o))
    m_logits, propensity = rng.standard_normal((n, k)), rng.standard_normal((n, o))
    labels = [0, 1, 2, 0, 1, 2]
    _check_gradients(lambda ps: effect_loss_a(ps, x, a, m_logits, propensity, labels),
                     _mlp(rng, d, 4, o * k).parameters())


def test_effect_loss_x_gradients():
    rng = np.random.default_rng(6)
    n, d, o, k = 6, 3, 2, 3
    x, a = rng.standard_normal((n, d)), rng.standard_normal((n, o))
    m_fixed, propensity = rng.standard_normal((n, k)), rng.standard_normal((n, o * k))
    labels = [2, 1, 0, 0, 1, 2]
    _check_gradients(lambda ps: effect_loss_x(ps, x, a, m_fixed, propensity, labels),
                     _mlp(rng, d, 4, o * k).parameters())


def test_effect_loss_a_without_correction_is_baseline():
    rng = np.random.default_rng(7)
    x, a = rng.standard_normal((8, 3)), rng.standard_normal((8, 2))
    labels = np.arange(8) % 2
    m = _mlp(rng, 3, 4, 2)
    zero_g = _mlp(rng, 3, 4, 4)
    zero_g.w2[:] = 0.0
    zero_g.b2[:] = 0.0
    expected, _ = baseline_loss(m.parameters(), x, labels)
    loss, _ = effect_loss_a(zero_g.parameters(), x, a, m.forward(x), rng.standard_normal((8, 2)), labels)
    assert loss == pytest.approx(expected, abs=1e-12)


def test_effect_loss_x_without_correction_is_frozen_outcome():
    rng = np.random.default_rng(8)
    x, a = rng.standard_normal((8, 3)), rng.standard_normal((8, 2))
    labels = np.arange(8) % 3
    m_fixed = rng.standard_normal((8, 3))
    zero_h = _mlp(rng, 3, 4, 6)
    zero_h.w2[:] = 0.0
    zero_h.b2[:] = 0.0
    loss, _ = effect_loss_x(zero_h.parameters(), x, a, m_fixed, np.zeros((8, 6)), labels)
    assert loss == pytest.approx(softmax_cross_entropy(m_fixed, labels), abs=1e-12)


def test_propensity_fits_constant_target():
    rng = np.random.default_rng(9)
    inputs = rng.standard_normal((50, 3))
    targets = np.tile([0.7, -0.4], (50, 1))
    params = init_mlp(rng, 3, 8, 2).parameters()
    state = init_adam(params, learning_rate=1e-2, weight_decay=0.0)
    for _ in range(4000):
        _, grads = propensity_loss(params, inputs, targets)
        params, state = adam_step(params, grads, state)
    loss, _ = propensity_loss(params, inputs, targets)
    assert loss <= 1e-3
    fitted = Mlp.from_parameters(params).forward(inputs)
    np.testing.assert_allclose(fitted.mean(axis=0), [0.7, -0.4], atol=0.05)


def test_propensity_matches_direct_regression():
    rng = np.random.default_rng(10)
    a = rng.standard_normal((50, 3))
    x = a @ rng.standard_normal((3, 5))
    h_x = init_mlp(rng, 5, 8, 4)
    targets = h_x.forward(x)
    params = init_mlp(rng, 3, 32, 4, zero_output=True).parameters()
    state = init_adam(params, learning_rate=1e-2, weight_decay=0.0)
    for _ in range(4000):
        _, grads = propensity_loss(params, a, targets)
        params, state = adam_step(params, grads, state)
    loss, _ = propensity_loss(params, a, targets)
    design = np.hstack([a, np.ones((50, 1))])
    coef, _, _, _ = np.linalg.lstsq(design, targets, rcond=None)
    direct = float(np.mean(np.sum((targets - design @ coef) ** 2, axis=1)))
    assert loss <= direct + 1e-3


def test_materialized_shared(small_graph):
    model = _model(small_graph.d, 3, small_graph.num_classes)
    shared = materialize_shared(model.encoder, small_graph, 2)
    assert shared.g_x is shared.h_a
    np.testing.assert_array_equal(shared.a, neighborhood_propagate(small_graph, 2) @ model.encoder.weights)
    np.testing.assert_array_equal(shared.m_a_fixed, shared.a @ model.encoder.head_weights + model.encoder.head_bias)
    with pytest.raises(ValueError):
        shared.a[0, 0] = 1.0
    with pytest.raises(ValueError):
        shared.m_a_fixed[0, 0] = 1.0


def test_isolated_nodes_have_zero_embedding(make_graph):
    g = make_graph(12, 3, 2, 0.4, 2, isolated=2)
    shared = materialize_shared(_model(3, 2, 2).encoder, g, 2)
    np.testing.assert_array_equal(shared.a[-2:], np.zeros((2, 2)))


def test_sample_background():
    mask = np.zeros(10, dtype=bool)
    mask[[1, 4, 6, 8]] = True
    sample = sample_background(mask, 3, 5)
    assert len(np.unique(sample.indices)) == 3
    assert np.all(mask[sample.indices])
    np.testing.assert_array_equal(sample.indices, sample_background(mask, 3, 5).indices)
    large = sample_background(mask, 9, 5)
    assert len(large.indices) == 9
    assert np.all(mask[large.indices])
    with pytest.raises(DecafError):
        sample_background(np.zeros(10, dtype=bool), 3, 5)


def test_exhaustive_background_is_mean_of_products(small_graph):
    masks = random_split(small_graph.n, seed=1)
    n_train = int(masks.train.sum())
    model = _model(small_graph.d, 2, small_graph.num_classes, cf_samples=n_train)
    shared = materialize_shared(model.encoder, small_graph, 2)
    cf = background_counterfactual(model, shared, small_graph, masks.train, 4)
    term_a, term_x = factual_terms(model, shared, small_graph)
    np.testing.assert_allclose(cf.cf_a, term_a[masks.train].mean(axis=0, keepdims=True), atol=1e-12)
    np.testing.assert_allclose(cf.cf_x, term_x[masks.train].mean(axis=0, keepdims=True), atol=1e-12)


def test_background_matches_direct_averaging(make_graph):
    g = make_graph(10, 3, 2, 0.4, 4)
    o, k = 2, 2
    model = _model(3, o, k, cf_samples=3)
    shared = materialize_shared(model.encoder, g, 2)
    mask = np.ones(10, dtype=bool)
    cf = background_counterfactual(model, shared, g, mask, 11)
    expected_a = np.zeros(k)
    expected_x = np.zeros(k)
    for j in cf.sample.indices:
        ga = model.g_a.forward(g.features[j:j + 1])[0]
        hx = model.h_x.forward(g.features[j:j + 1])[0]
        for c in range(k):
            expected_a[c] += _block_dot(ga, shared.a[j], c) / 3
            expected_x[c] += _block_dot(hx, shared.a[j], c) / 3
    np.testing.assert_allclose(cf.cf_a[0], expected_a, atol=1e-12)
    np.testing.assert_allclose(cf.cf_x[0], expected_x, atol=1e-12)
    again = background_counterfactual(model, shared, g, mask, 11)
    np.testing.assert_array_equal(cf.sample.indices, again.sample.indices)
    np.testing.assert_array_equal(cf.cf_a, again.cf_a)


def test_own_confounder_counterfactual(make_graph):
    g = make_graph(8, 3, 2, 0.4, 6)
    o, k = 2, 2
    model = _model(3, o, k, cf_samples=4, counterfactual=COUNTERFACTUAL_OWN)
    shared = materialize_shared(model.encoder, g, 2)
    cf = background_counterfactual(model, shared, g, np.ones(8, dtype=bool), 2)
    idx = cf.sample.indices
    mean_a = shared.a[idx].mean(axis=0)
    mean_h = model.h_x.forward(g.features[idx]).mean(axis=0)
    assert cf.cf_a.shape == (8, k)
    for i in range(8):
        ga = model.g_a.forward(g.features[i:i + 1])[0]
        for c in range(k):
            assert cf.cf_a[i, c] == pytest.approx(_block_dot(ga, mean_a, c), abs=1e-12)
            assert cf.cf_x[i, c] == pytest.approx(_block_dot(mean_h, shared.a[i], c), abs=1e-12)


def test_homogeneous_treatment_has_zero_effect():
    n = 6
    edges = [(i, j) for i in range(n) for j in range(i + 1, n)]
    g = GraphData.from_edges(np.ones((n, 3)), np.arange(n) % 3, edges, 3)
    model = _model(3, 2, 3, cf_samples=4)
    shared = materialize_shared(model.encoder, g, 2)
    cf = background_counterfactual(model, shared, g, np.ones(n, dtype=bool), 1)
    effects = estimate_effects(model, shared, g, cf)
    np.testing.assert_allclose(effects.psi_a, np.zeros((n, 3)), atol=1e-12)
    np.testing.assert_allclose(effects.psi_x, np.zeros((n, 3)), atol=1e-12)


def test_effect_differences_equal_factual_differences(small_graph):
    model = _model(small_graph.d, 2, small_graph.num_classes)
    shared = materialize_shared(model.encoder, small_graph, 2)
    cf = background_counterfactual(model, shared, small_graph, np.ones(small_graph.n, dtype=bool), 3)
    effects = estimate_effects(model, shared, small_graph, cf)
    term_a, term_x = factual_terms(model, shared, small_graph)
    np.testing.assert_allclose(effects.psi_a - effects.psi_a[0], term_a - term_a[0], atol=1e-12)
    np.testing.assert_allclose(effects.psi_x - effects.psi_x[0], term_x - term_x[0], atol=1e-12)


def test_effects_match_formula(make_graph):
    g = make_graph(8, 3, 2, 0.5, 8)
    o, k = 2, 2
    model = _model(3, o, k, cf_samples=3)
    shared = materialize_shared(model.encoder, g, 2)
    cf = background_counterfactual(model, shared, g, np.ones(8, dtype=bool), 9)
    effects = estimate_effects(model, shared, g, cf)
    for i in range(8):
        ga = model.g_a.forward(g.features[i:i + 1])[0]
        hx = model.h_x.forward(g.features[i:i + 1])[0]
        for c in range(k):
            assert effects.psi_a[i, c] == pytest.approx(_block_dot(ga, shared.a[i], c) - cf.cf_a[0, c], abs=1e-12)
            assert effects.psi_x[i, c] == pytest.approx(_block_dot(hx, shared.a[i], c) - cf.cf_x[0, c], abs=1e-12)


def test_gamma_one_ignores_neighborhood_effect():
    rng = np.random.default_rng(10)
    psi_x = rng.standard_normal((5, 3))
    a = combine_effects(EffectEstimates(psi_x=psi_x, psi_a=rng.standard_normal((5, 3))), 1.0)
    b = combine_effects(EffectEstimates(psi_x=psi_x, psi_a=100 * rng.standard_normal((5, 3))), 1.0)
    np.testing.assert_array_equal(a, b)


def test_predict_composes_effects(small_graph):
    model = _model(small_graph.d, 2, small_graph.num_classes, gamma=0.3)
    shared = materialize_shared(model.encoder, small_graph, 2)
    mask = np.ones(small_graph.n, dtype=bool)
    probs, classes = predict(model, shared, small_graph, mask, 6)
    np.testing.assert_allclose(probs.sum(axis=1), np.ones(small_graph.n), atol=1e-9)
    effects = estimate_effects(model, shared, small_graph, background_counterfactual(model, shared, small_graph, mask, 6))
    np.testing.assert_array_equal(probs, combine_effects(effects, 0.3))
    np.testing.assert_array_equal(classes, np.argmax(probs, axis=1))


def test_select_gamma(small_graph):
    model = _model(small_graph.d, 2, small_graph.num_classes, gamma=0.5)
    shared = materialize_shared(model.encoder, small_graph, 2)
    masks = random_split(small_graph.n, seed=2)
    tuned, scores = select_gamma(model, shared, small_graph, masks, 1)
    assert sorted(scores.keys()) == GAMMA_GRID
    assert scores[tuned.gamma] == max(scores.values())
    first_best = [gm for gm in GAMMA_GRID if scores[gm] == max(scores.values())][0]
    assert tuned.gamma == first_best
    assert model.gamma == 0.5


def test_model_check_rejects_bad_shapes():
    model = _model(3, 2, 2)
    model.check(3)
    with pytest.raises(ShapeError):
        model.check(4)


def test_train_encoder_descends_and_is_deterministic(small_graph, fast_config):
    masks = random_split(small_graph.n, seed=1)
    weights, trace = train_encoder(small_graph, masks, fast_config)
    assert trace.stage == STAGE_ENCODER
    assert trace.losses[-1] < trace.losses[0]
    again, _ = train_encoder(small_graph, masks, fast_config)
    for p, q in zip(weights.parameters(), again.parameters()):
        np.testing.assert_array_equal(p, q)


def test_train_encoder_separates_neighborhoods(fast_config):
    # two cliques whose members carry the clique id in their features
    rng = np.random.default_rng(0)
    labels = np.repeat([0, 1], 10)
    features = np.eye(2)[labels] + 0.05 * rng.standard_normal((20, 2))
    edges = [(i, j) for block in (range(10), range(10, 20)) for i in block for j in block if i < j]
    g = GraphData.from_edges(features, labels, edges, 2)
    config = fast_config.copy({"epochs": 200, "patience": 200, "lr": 0.05, "layers": 1})
    _, trace = train_encoder(g, random_split(20, seed=1), config)
    assert trace.epochs == 200
    assert trace.losses[-1] < math.log(2)


def test_train_encoder_requires_training_nodes(small_graph, fast_config):
    masks = random_split(small_graph.n, seed=1)
    masks.train[:] = False
    with pytest.raises(DecafError):
        train_encoder(small_graph, masks, fast_config)


def test_scm_stages_are_deterministic(small_graph, fast_config):
    masks = random_split(small_graph.n, seed=1)
    encoder, _ = train_encoder(small_graph, masks, fast_config)
    shared = materialize_shared(encoder, small_graph, fast_config.get("layers"))
    a_before = shared.a.copy()
    (m_a, g_a, e_a), traces_a = train_scm_a(small_graph, shared, masks, fast_config)
    (h_x, e_x), trace_x = train_scm_x(small_graph, shared, masks, fast_config)
    assert [t.stage for t in traces_a] == [STAGE_SCM_A_BASELINE, STAGE_SCM_A]
    assert trace_x.stage == STAGE_SCM_X
    np.testing.assert_array_equal(shared.a, a_before)
    (_, g_a2, _), _ = train_scm_a(small_graph, shared, masks, fast_config)
    (h_x2, _), _ = train_scm_x(small_graph, shared, masks, fast_config)
    np.testing.assert_array_equal(g_a.w1, g_a2.w1)
    np.testing.assert_array_equal(h_x.w2, h_x2.w2)
    assert g_a.out_dim == fast_config.get("hidden") * small_graph.num_classes
    assert e_x.in_dim == fast_config.get("hidden")


@pytest.mark.parametrize("counterfactual", [COUNTERFACTUAL_SHARED, COUNTERFACTUAL_OWN])
def test_decaf_trainer(small_graph, fast_config, counterfactual):
    masks = random_split(small_graph.n, seed=1)
    config = fast_config.copy({"tune_gamma": True, "counterfactual": counterfactual})
    fit = DecafTrainer(config).train(small_graph, masks)
    assert len(fit.traces) == 4
    assert fit.model.gamma in GAMMA_GRID
    assert sorted(fit.gamma_scores.keys()) == GAMMA_GRID
    assert fit.model.counterfactual == counterfactual
    assert not fit.shared.a.flags.writeable
    probs, _ = predict(fit.model, fit.shared, small_graph, masks.train, 1)
    np.testing.assert_allclose(probs.sum(axis=1), np.ones(small_graph.n), atol=1e-9)
    again = DecafTrainer(config).train(small_graph, masks)
    np.testing.assert_array_equal(fit.model.g_a.w1, again.model.g_a.w1)
    np.testing.assert_array_equal(fit.model.e_x.b2, again.model.e_x.b2)


def test_shared_for_other_graph(small_graph, make_graph):
    model = _model(small_graph.d, 2, small_graph.num_classes)
    other = make_graph(20, small_graph.d, small_graph.num_classes, 0.3, 9)
    shared = shared_for_graph(model, other)
    assert shared.a.shape == (20, 2)
    with pytest.raises(ShapeError):
        shared_for_graph(model, make_graph(20, small_graph.d + 1, small_graph.num_classes, 0.3, 9))
