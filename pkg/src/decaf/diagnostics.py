"""
Measures distribution shift between two graphs with two-sample Hotelling
T-squared statistics, separately for the node features and for the
neighborhood representations.
"""
import csv
import json
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy import stats

from decaf.errors import DecafError, ShapeError
from decaf.graph import GraphData, neighborhood_encode
from decaf.logging import warn
from decaf.numerics import Matrix, as_matrix
from decaf.scmgen import ScmParams, LatentSample, latent_neighborhood

CLASSES_FIRST = "first"
CLASSES_ALL = "all"
CLASS_MODES = [CLASSES_FIRST, CLASSES_ALL]

RIDGE_SCALE = 1e-3
""" default ridge relative to the mean variance of the pooled covariance """

Encoder = Callable[[GraphData], Matrix]


def pooled_covariance(sample_a: Matrix, sample_b: Matrix) -> Matrix:
    """
    The pooled covariance with nA + nB - 2 as denominator.
    """
    n_a, n_b = sample_a.shape[0], sample_b.shape[0]
    ca = sample_a - sample_a.mean(axis=0)
    cb = sample_b - sample_b.mean(axis=0)
    return (ca.T @ ca + cb.T @ cb) / (n_a + n_b - 2)


def hotelling_t2(sample_a: Matrix, sample_b: Matrix, ridge: Optional[float] = None) -> float:
    """
    Two-sample Hotelling T-squared:
    nA nB / (nA + nB) * diff' (pooled + ridge I)^-1 diff, with diff the
    difference of the sample means.

    :param sample_a: the first sample, one observation per row
    :type sample_a: np.ndarray
    :param sample_b: the second sample, same number of columns
    :type sample_b: np.ndarray
    :param ridge: added to the diagonal of the pooled covariance, None for
                  1e-3 * trace(pooled) / m
    :type ridge: float
    :return: the statistic
    :rtype: float
    """
    sample_a = as_matrix(sample_a)
    sample_b = as_matrix(sample_b)
    if sample_a.shape[1] != sample_b.shape[1]:
        raise ShapeError("Samples have %d and %d columns" % (sample_a.shape[1], sample_b.shape[1]))
    n_a, n_b = sample_a.shape[0], sample_b.shape[0]
    if (n_a < 2) or (n_b < 2):
        raise DecafError("Need at least 2 observations per sample, got: %d and %d" % (n_a, n_b))
    m = sample_a.shape[1]
    pooled = pooled_covariance(sample_a, sample_b)
    if ridge is None:
        ridge = RIDGE_SCALE * np.trace(pooled) / m
    diff = sample_a.mean(axis=0) - sample_b.mean(axis=0)
    if not np.any(diff):
        return 0.0
    try:
        solved = np.linalg.solve(pooled + ridge * np.eye(m), diff)
    except np.linalg.LinAlgError:
        raise DecafError("Pooled covariance is singular, use a positive ridge")
    return float(max(n_a * n_b / (n_a + n_b) * diff @ solved, 0.0))


def hotelling_pvalue(t2: float, n_a: int, n_b: int, m: int) -> float:
    """
    The p-value of the statistic under the null of equal means, using
    (nA + nB - m - 1) / (m (nA + nB - 2)) T^2 ~ F(m, nA + nB - m - 1).

    :param t2: the statistic
    :type t2: float
    :param n_a: the size of the first sample
    :type n_a: int
    :param n_b: the size of the second sample
    :type n_b: int
    :param m: the number of variables
    :type m: int
    :return: the p-value
    :rtype: float
    """
    dof = n_a + n_b - m - 1
    if dof < 1:
        raise DecafError("Too few observations (%d + %d) for %d variables" % (n_a, n_b, m))
    f = dof / (m * (n_a + n_b - 2)) * t2
    return float(stats.f.sf(f, m, dof))


def mean_neighborhood_encoder(layers: int = 2) -> Encoder:
    """
    The parameter-free neighborhood encoder (identity weights): the same
    aggregation as the learned encoder without the projection.

    :param layers: the number of hops
    :type layers: int
    :return: maps a graph to its n x d neighborhood representations
    """
    def encode(g: GraphData) -> Matrix:
        return neighborhood_encode(g, np.eye(g.d), layers)
    return encode


@dataclass
class ShiftReport:
    """
    The per-class T-squared values of features and neighborhood representations.
    """
    class_ids: List[int]
    feature_t2: List[float]
    neighbor_t2: List[float]
    omitted: List[int] = field(default_factory=list)

    def mean_feature_t2(self) -> float:
        if len(self.feature_t2) == 0:
            raise DecafError("No classes in report")
        return float(np.mean(self.feature_t2))

    def mean_neighbor_t2(self) -> float:
        if len(self.neighbor_t2) == 0:
            raise DecafError("No classes in report")
        return float(np.mean(self.neighbor_t2))

    def to_dict(self) -> dict:
        return {
            "classes": [
                {"class_id": c, "feature_t2": f, "neighbor_t2": a}
                for c, f, a in zip(self.class_ids, self.feature_t2, self.neighbor_t2)],
            "omitted": list(self.omitted),
        }

    def write_csv(self, path: str):
        """
        Writes one row per class: class_id, feature_t2, neighbor_t2.

        :param path: the file to write
        :type path: str
        """
        with open(path, "w", newline="") as fp:
            writer = csv.writer(fp)
            writer.writerow(["class_id", "feature_t2", "neighbor_t2"])
            for c, f, a in zip(self.class_ids, self.feature_t2, self.neighbor_t2):
                writer.writerow([c, repr(f), repr(a)])

    def write_json(self, path: str):
        with open(path, "w") as fp:
            json.dump(self.to_dict(), fp, indent=2)
            fp.write("\n")


def compare_classes(labels_train: np.ndarray, labels_test: np.ndarray, num_classes: int,
                    features: Tuple[Matrix, Matrix], neighborhoods: Tuple[Matrix, Matrix],
                    ridge: Optional[float] = None, classes: str = CLASSES_FIRST) -> ShiftReport:
    """
    Computes the class-conditional statistics of both branches. Classes with
    fewer than 2 nodes in either graph are omitted (with a warning).

    :param labels_train: the labels of the first graph
    :type labels_train: np.ndarray
    :param labels_test: the labels of the second graph
    :type labels_test: np.ndarray
    :param num_classes: the number of classes
    :type num_classes: int
    :param features: the feature representations of the two graphs
    :type features: tuple
    :param neighborhoods: the neighborhood representations of the two graphs
    :type neighborhoods: tuple
    :param ridge: the ridge of the statistic, None for the default
    :type ridge: float
    :param classes: 'first' for the first class only, 'all' for every class
    :type classes: str
    :return: the report
    :rtype: ShiftReport
    """
    if classes not in CLASS_MODES:
        raise DecafError("Unknown class mode '%s', available: %s" % (classes, str(CLASS_MODES)))
    feat_train, feat_test = features
    neigh_train, neigh_test = neighborhoods
    candidates = range(num_classes) if classes == CLASSES_ALL else range(1)
    result = ShiftReport(class_ids=[], feature_t2=[], neighbor_t2=[])
    for c in candidates:
        in_train = labels_train == c
        in_test = labels_test == c
        if (in_train.sum() < 2) or (in_test.sum() < 2):
            warn("Omitting class %d: %d/%d nodes" % (c, in_train.sum(), in_test.sum()))
            result.omitted.append(c)
            continue
        result.class_ids.append(c)
        result.feature_t2.append(hotelling_t2(feat_train[in_train], feat_test[in_test], ridge=ridge))
        result.neighbor_t2.append(hotelling_t2(neigh_train[in_train], neigh_test[in_test], ridge=ridge))
    return result


def _check_pair(g_train: GraphData, g_test: GraphData):
    if g_train.num_classes != g_test.num_classes:
        raise DecafError("Graphs differ in classes: %d vs %d" % (g_train.num_classes, g_test.num_classes))
    if g_train.d != g_test.d:
        raise ShapeError("Graphs differ in features: %d vs %d" % (g_train.d, g_test.d))


def shift_report(g_train: GraphData, g_test: GraphData, encoder: Optional[Encoder] = None,
                 ridge: Optional[float] = None, classes: str = CLASSES_FIRST,
                 feature_encoder: Optional[Encoder] = None) -> ShiftReport:
    """
    Compares the class-conditional distributions of the two graphs, using
    encoders computed from the observed graphs only.

    :param g_train: the first graph
    :type g_train: GraphData
    :param g_test: the second graph, same classes and feature space
    :type g_test: GraphData
    :param encoder: computes the neighborhood representations, the mean encoder if None
    :param ridge: the ridge of the statistic, None for the default
    :type ridge: float
    :param classes: 'first' for the first class only, 'all' for every class
    :type classes: str
    :param feature_encoder: computes the representations for the feature branch, the raw features if None
    :return: the report
    :rtype: ShiftReport
    """
    _check_pair(g_train, g_test)
    if encoder is None:
        encoder = mean_neighborhood_encoder()
    if feature_encoder is None:
        features = (g_train.features, g_test.features)
    else:
        features = (feature_encoder(g_train), feature_encoder(g_test))
    return compare_classes(g_train.labels, g_test.labels, g_train.num_classes, features,
                           (encoder(g_train), encoder(g_test)), ridge=ridge, classes=classes)


def latent_shift_report(train: Tuple[ScmParams, LatentSample, GraphData],
                        test: Tuple[ScmParams, LatentSample, GraphData],
                        ridge: Optional[float] = None, classes: str = CLASSES_FIRST) -> ShiftReport:
    """
    Compares two generated graphs with the raw features as the feature branch
    and the latent neighborhood representations as the neighborhood branch.
    Unlike aggregated features, the latter do not move when only the feature
    map changes.

    :param train: the parameters, latents and graph of the first graph
    :type train: tuple
    :param test: the parameters, latents and graph of the second graph
    :type test: tuple
    :param ridge: the ridge of the statistic, None for the default
    :type ridge: float
    :param classes: 'first' for the first class only, 'all' for every class
    :type classes: str
    :return: the report
    :rtype: ShiftReport
    """
    params_train, latents_train, g_train = train
    params_test, latents_test, g_test = test
    _check_pair(g_train, g_test)
    neighborhoods = (latent_neighborhood(params_train, latents_train, g_train),
                     latent_neighborhood(params_test, latents_test, g_test))
    return compare_classes(g_train.labels, g_test.labels, g_train.num_classes,
                           (g_train.features, g_test.features), neighborhoods, ridge=ridge, classes=classes)
