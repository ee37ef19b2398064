import json
import os

import numpy as np
import pytest

from decaf.config import ExperimentConfig
from decaf.diagnostics import (pooled_covariance, hotelling_t2, hotelling_pvalue, shift_report, latent_shift_report,
                               CLASSES_ALL)
from decaf.errors import DecafError, ShapeError
from decaf.experiment import generate_graphs
from decaf.scmgen import (make_recipe, apply_shift, sample_latents, generate_graph, ShiftSpec, RECIPE_H_FEAT,
                          SHIFT_COVARIATE, SHIFT_CONCEPT_X, SHIFT_CONCEPT_A)


def test_one_dimensional_hand_example():
    assert hotelling_t2([[0.0], [2.0]], [[4.0], [6.0]], ridge=0.0) == pytest.approx(8.0)


def test_pooled_covariance():
    np.testing.assert_allclose(pooled_covariance(np.array([[0.0], [2.0]]), np.array([[4.0], [6.0]])), [[2.0]])


def test_identical_samples_give_zero():
    sample = np.random.default_rng(0).standard_normal((20, 3))
    assert hotelling_t2(sample, sample) == 0.0


def test_statistic_is_symmetric():
    rng = np.random.default_rng(1)
    a, b = rng.standard_normal((15, 3)), rng.standard_normal((25, 3)) + 0.5
    assert hotelling_t2(a, b) == pytest.approx(hotelling_t2(b, a))


def test_affine_invariance_without_ridge():
    rng = np.random.default_rng(2)
    a, b = rng.standard_normal((30, 3)), rng.standard_normal((40, 3)) + 0.3
    m = rng.standard_normal((3, 3)) + 3 * np.eye(3)
    shift = rng.standard_normal(3)
    assert hotelling_t2(a @ m.T + shift, b @ m.T + shift, ridge=0.0) == pytest.approx(hotelling_t2(a, b, ridge=0.0), rel=1e-8)


def test_invalid_samples():
    with pytest.raises(ShapeError):
        hotelling_t2(np.zeros((3, 2)), np.zeros((3, 3)))
    with pytest.raises(DecafError):
        hotelling_t2(np.zeros((1, 2)), np.zeros((3, 2)))
    with pytest.raises(DecafError):
        hotelling_t2([[0.0, 0.0], [1.0, 1.0]], [[2.0, 2.0], [3.0, 3.0]], ridge=0.0)


def test_pvalue():
    assert hotelling_pvalue(0.0, 10, 10, 2) == pytest.approx(1.0)
    assert hotelling_pvalue(100.0, 50, 50, 2) < 1e-6
    with pytest.raises(DecafError):
        hotelling_pvalue(1.0, 2, 2, 5)


def test_report_on_identical_graphs(small_graph, tmp_path):
    report = shift_report(small_graph, small_graph, classes=CLASSES_ALL)
    assert report.class_ids == [0, 1, 2]
    assert report.feature_t2 == [0.0, 0.0, 0.0]
    assert report.neighbor_t2 == [0.0, 0.0, 0.0]
    csv_path = os.path.join(str(tmp_path), "shift.csv")
    json_path = os.path.join(str(tmp_path), "shift.json")
    report.write_csv(csv_path)
    report.write_json(json_path)
    with open(csv_path) as fp:
        assert fp.readline().strip() == "class_id,feature_t2,neighbor_t2"
    with open(json_path) as fp:
        assert len(json.load(fp)["classes"]) == 3


def test_report_omits_small_classes(make_graph):
    g = make_graph(12, 3, 3, 0.3, 1)
    h = make_graph(12, 3, 3, 0.3, 2)
    h.labels = np.array([0] * 11 + [1])
    report = shift_report(g, h, classes=CLASSES_ALL)
    assert report.omitted == [1, 2]
    assert report.class_ids == [0]


def test_report_first_class_only(small_graph):
    report = shift_report(small_graph, small_graph)
    assert report.class_ids == [0]


def test_latent_report_on_unshifted_graphs():
    config = ExperimentConfig(options={"num_nodes": 300, "seed": 4})
    synthetic = generate_graphs(config)
    report = latent_shift_report(synthetic.train, synthetic.test, classes=CLASSES_ALL)
    assert report.feature_t2 == [0.0] * len(report.class_ids)
    assert report.neighbor_t2 == [0.0] * len(report.class_ids)


def test_latent_neighborhoods_ignore_feature_map():
    params = make_recipe(RECIPE_H_FEAT, 3, num_nodes=200)
    latents = sample_latents(params, 200, 3)
    g = generate_graph(params, latents, 3)
    changed = apply_shift(params, ShiftSpec(kind=SHIFT_CONCEPT_X, magnitude=0.8, seed=3))
    report = latent_shift_report((params, latents, g), (changed, latents, g), classes=CLASSES_ALL)
    assert report.neighbor_t2 == [0.0] * len(report.class_ids)


def _median_branch_t2(kind, seeds=(1, 2, 3, 4, 5)):
    features, neighborhoods = [], []
    for seed in seeds:
        config = ExperimentConfig(options={"recipe": RECIPE_H_FEAT, "num_nodes": 2000, "seed": seed,
                                           "shift": kind, "magnitude": 0.8})
        synthetic = generate_graphs(config)
        report = latent_shift_report(synthetic.train, synthetic.test, classes=CLASSES_ALL)
        features.append(report.mean_feature_t2())
        neighborhoods.append(report.mean_neighbor_t2())
    return float(np.median(features)), float(np.median(neighborhoods))


@pytest.mark.slow
def test_covariate_shift_leaves_features_closer():
    features, neighborhoods = _median_branch_t2(SHIFT_COVARIATE)
    assert 5 * features <= neighborhoods


@pytest.mark.slow
def test_concept_x_shift_leaves_neighborhoods_invariant():
    features, neighborhoods = _median_branch_t2(SHIFT_CONCEPT_X)
    assert 5 * neighborhoods <= features


@pytest.mark.slow
def test_concept_a_shift_leaves_features_invariant():
    features, neighborhoods = _median_branch_t2(SHIFT_CONCEPT_A)
    assert 5 * features <= neighborhoods
