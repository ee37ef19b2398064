"""
Graph container, adjacency normalization and the graph propagation schemes.
"""
from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from decaf.errors import DecafError, ShapeError
from decaf.numerics import Matrix, as_matrix, check_labels, glorot

BACKBONE_SGC = "sgc"
BACKBONE_GCN = "gcn"
BACKBONES = [BACKBONE_SGC, BACKBONE_GCN]


@dataclass
class GraphData:
    """
    Node features, integer class labels and a symmetric CSR adjacency without self-loops.
    """
    features: Matrix
    labels: np.ndarray
    adjacency: sp.csr_matrix
    num_classes: int

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def row_starts(self) -> np.ndarray:
        return self.adjacency.indptr

    @property
    def column_ids(self) -> np.ndarray:
        return self.adjacency.indices

    @classmethod
    def from_edges(cls, features: Matrix, labels: Sequence[int], edges: Sequence[Tuple[int, int]],
                   num_classes: int, require_all_classes: bool = True) -> 'GraphData':
        """
        Builds a graph from undirected node pairs; both directions get stored.

        :param features: the n x d features
        :param labels: the n class labels
        :param edges: the node pairs (each pair once, order irrelevant)
        :param num_classes: the number of classes
        :type num_classes: int
        :param require_all_classes: whether every class must occur
        :type require_all_classes: bool
        :return: the validated graph
        :rtype: GraphData
        """
        features = as_matrix(features)
        n = features.shape[0]
        edges = np.asarray(edges, dtype=np.int64).reshape((-1, 2))
        if np.any(edges[:, 0] == edges[:, 1]):
            raise DecafError("Self-loops are not allowed")
        if len(edges) > 0 and (edges.min() < 0 or edges.max() >= n):
            raise DecafError("Edge endpoint outside [0, %d)" % n)
        rows = np.concatenate([edges[:, 0], edges[:, 1]])
        cols = np.concatenate([edges[:, 1], edges[:, 0]])
        adjacency = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
        adjacency.sum_duplicates()
        adjacency.data[:] = 1.0
        adjacency.sort_indices()
        result = cls(features=features, labels=np.asarray(labels, dtype=np.int64), adjacency=adjacency,
                     num_classes=int(num_classes))
        result.validate(require_all_classes=require_all_classes)
        return result

    def edges(self) -> np.ndarray:
        """
        Returns the undirected edges as u < v pairs, sorted.

        :return: the m x 2 array
        :rtype: np.ndarray
        """
        upper = sp.triu(self.adjacency, k=1).tocoo()
        result = np.stack([upper.row, upper.col], axis=1).astype(np.int64)
        order = np.lexsort((result[:, 1], result[:, 0]))
        return result[order]

    def degrees(self) -> np.ndarray:
        return np.diff(self.adjacency.indptr)

    def validate(self, require_all_classes: bool = True):
        """
        Checks the invariants, raises an exception if violated.

        :param require_all_classes: whether every class must occur in the labels
        :type require_all_classes: bool
        """
        if self.n < 2:
            raise DecafError("Graph needs at least 2 nodes, got: %d" % self.n)
        if self.d < 1:
            raise DecafError("Graph needs at least one feature")
        if len(self.labels) != self.n:
            raise ShapeError("Got %d labels for %d nodes" % (len(self.labels), self.n))
        check_labels(self.labels, self.num_classes)
        if self.adjacency.shape != (self.n, self.n):
            raise ShapeError("Adjacency is %s for %d nodes" % (str(self.adjacency.shape), self.n))
        if (self.adjacency != self.adjacency.T).nnz > 0:
            raise DecafError("Adjacency is not symmetric")
        if np.any(self.adjacency.diagonal() != 0):
            raise DecafError("Adjacency contains self-loops")
        if require_all_classes:
            missing = np.setdiff1d(np.arange(self.num_classes), self.labels)
            if len(missing) > 0:
                raise DecafError("Classes without nodes: %s" % str(missing.tolist()))

    def permute(self, perm: Sequence[int]) -> 'GraphData':
        """
        Relabels the nodes: new node i is old node perm[i].

        :param perm: the permutation
        :return: the permuted graph
        :rtype: GraphData
        """
        perm = np.asarray(perm)
        adjacency = self.adjacency[perm][:, perm].tocsr()
        adjacency.sort_indices()
        return GraphData(features=self.features[perm].copy(), labels=self.labels[perm].copy(),
                         adjacency=adjacency, num_classes=self.num_classes)


def _inverse_sqrt(degrees: np.ndarray) -> np.ndarray:
    result = np.zeros(len(degrees))
    nonzero = degrees > 0
    result[nonzero] = 1.0 / np.sqrt(degrees[nonzero])
    return result


def symmetric_normalize(matrix: sp.spmatrix) -> sp.csr_matrix:
    """
    D^-1/2 M D^-1/2 with D the row sums of M; zero-degree rows stay zero.

    :param matrix: the non-negative square matrix
    :return: the normalized matrix
    :rtype: sp.csr_matrix
    """
    scale = sp.diags(_inverse_sqrt(np.asarray(matrix.sum(axis=1)).ravel()))
    return (scale @ matrix @ scale).tocsr()


def normalize_adjacency(g: GraphData, self_loops: bool = True) -> sp.csr_matrix:
    """
    Returns D~^-1/2 (A + I) D~^-1/2 when self_loops is set, D^-1/2 A D^-1/2 otherwise.

    :param g: the graph
    :type g: GraphData
    :param self_loops: whether to add the identity before normalizing
    :type self_loops: bool
    :return: the normalized adjacency
    :rtype: sp.csr_matrix
    """
    a = g.adjacency
    if self_loops:
        a = a + sp.identity(g.n, format="csr")
    return symmetric_normalize(a)


def mean_adjacency(g: GraphData) -> sp.csr_matrix:
    """
    D^-1 A, i.e., the mean over the neighbors; isolated nodes get zero rows.
    """
    degrees = g.degrees().astype(np.float64)
    inv = np.zeros(g.n)
    inv[degrees > 0] = 1.0 / degrees[degrees > 0]
    return (sp.diags(inv) @ g.adjacency).tocsr()


def propagate_features(g: GraphData, hops: int) -> Matrix:
    """
    S^k X with the self-loop normalized adjacency S.
    """
    if hops < 1:
        raise DecafError("Number of hops must be at least 1, got: %d" % hops)
    s = normalize_adjacency(g, self_loops=True)
    result = g.features
    for _ in range(hops):
        result = s @ result
    return np.asarray(result)


@dataclass
class BackboneModel:
    """
    SGC (weights: [theta]) or two-layer GCN (weights: [W1, W2]).
    """
    kind: str
    hops: int
    weights: List[Matrix]

    def check(self, d: int, num_classes: int):
        if self.kind == BACKBONE_SGC:
            if self.hops < 1:
                raise DecafError("SGC needs at least one hop, got: %d" % self.hops)
            if (len(self.weights) != 1) or (self.weights[0].shape != (d, num_classes)):
                raise ShapeError("SGC expects a single %dx%d matrix" % (d, num_classes))
        elif self.kind == BACKBONE_GCN:
            if len(self.weights) != 2:
                raise ShapeError("GCN expects two weight matrices, got: %d" % len(self.weights))
            w1, w2 = self.weights
            if (w1.shape[0] != d) or (w2.shape != (w1.shape[1], num_classes)):
                raise ShapeError("GCN weights %s / %s do not fit d=%d, classes=%d"
                                 % (str(w1.shape), str(w2.shape), d, num_classes))
        else:
            raise DecafError("Unknown backbone: %s" % self.kind)


def init_backbone(kind: str, d: int, num_classes: int, hops: int, hidden: int, rng: np.random.Generator) -> BackboneModel:
    """
    Creates a backbone with Glorot-uniform weights.
    """
    if kind == BACKBONE_SGC:
        weights = [glorot(rng, d, num_classes)]
    elif kind == BACKBONE_GCN:
        weights = [glorot(rng, d, hidden), glorot(rng, hidden, num_classes)]
    else:
        raise DecafError("Unknown backbone: %s" % kind)
    result = BackboneModel(kind=kind, hops=hops, weights=weights)
    result.check(d, num_classes)
    return result


def backbone_forward(model: BackboneModel, g: GraphData) -> Matrix:
    """
    Pre-activation logits: S^k X theta for SGC, S relu(S X W1) W2 for GCN.

    :param model: the backbone
    :type model: BackboneModel
    :param g: the graph
    :type g: GraphData
    :return: the n x classes logits
    :rtype: np.ndarray
    """
    model.check(g.d, g.num_classes)
    if model.kind == BACKBONE_SGC:
        return propagate_features(g, model.hops) @ model.weights[0]
    s = normalize_adjacency(g, self_loops=True)
    w1, w2 = model.weights
    hidden = np.maximum(np.asarray(s @ (g.features @ w1)), 0.0)
    return np.asarray(s @ (hidden @ w2))


def walk_matrix(g: GraphData, hops: int) -> sp.csr_matrix:
    """
    A (A + I)^(k-1): k-hop walks whose first step leaves the central node.
    """
    if hops < 1:
        raise DecafError("Number of hops must be at least 1, got: %d" % hops)
    a_tilde = g.adjacency + sp.identity(g.n, format="csr")
    result = g.adjacency.tocsr()
    for _ in range(hops - 1):
        result = result @ a_tilde
    return result.tocsr()


def gamma_propagation(g: GraphData, hops: int, gamma: float) -> sp.csr_matrix:
    """
    S' = gamma I + (1 - gamma) D_k^-1/2 W D_k^-1/2 with W the walk matrix and
    D_k its row sums: the central node keeps the fixed weight gamma.

    :param g: the graph
    :type g: GraphData
    :param hops: the number of hops k
    :type hops: int
    :param gamma: the weight of the central node
    :type gamma: float
    :return: the propagation matrix
    :rtype: sp.csr_matrix
    """
    if not (0.0 <= gamma <= 1.0):
        raise DecafError("gamma must lie in [0, 1], got: %f" % gamma)
    neighbors = symmetric_normalize(walk_matrix(g, hops))
    return (gamma * sp.identity(g.n, format="csr") + (1.0 - gamma) * neighbors).tocsr()


def sgc_decomposed(g: GraphData, theta: Matrix, hops: int, gamma: float) -> Tuple[Matrix, Matrix]:
    """
    Splits the gamma-weighted SGC into the central-feature term X theta and the
    neighborhood term D_k^-1/2 A A~^(k-1) D_k^-1/2 X theta.

    :param g: the graph
    :type g: GraphData
    :param theta: the d x classes weights
    :type theta: np.ndarray
    :param hops: the number of hops k
    :type hops: int
    :param gamma: the weight of the central node, in [0, 1]
    :type gamma: float
    :return: the tuple of psi_x and psi_a
    :rtype: tuple
    """
    if not (0.0 <= gamma <= 1.0):
        raise DecafError("gamma must lie in [0, 1], got: %f" % gamma)
    if theta.shape[0] != g.d:
        raise ShapeError("theta has %d rows for %d features" % (theta.shape[0], g.d))
    projected = g.features @ theta
    psi_a = np.asarray(symmetric_normalize(walk_matrix(g, hops)) @ projected)
    return projected, psi_a


def neighborhood_propagate(g: GraphData, layers: int) -> Matrix:
    """
    The parameter-free part of the neighborhood encoder: the first hop averages
    over the neighbors only (central node excluded), later hops use the
    self-loop normalized adjacency.

    :param g: the graph
    :type g: GraphData
    :param layers: the number of hops L
    :type layers: int
    :return: the n x d aggregated features
    :rtype: np.ndarray
    """
    if layers < 1:
        raise DecafError("Number of layers must be at least 1, got: %d" % layers)
    result = np.asarray(mean_adjacency(g) @ g.features)
    if layers > 1:
        s = normalize_adjacency(g, self_loops=True)
        for _ in range(layers - 1):
            result = np.asarray(s @ result)
    return result


def neighborhood_encode(g: GraphData, encoder_weights: Matrix, layers: int) -> Matrix:
    """
    Computes the neighborhood representations a_i.

    :param g: the graph
    :type g: GraphData
    :param encoder_weights: the d x o linear map
    :type encoder_weights: np.ndarray
    :param layers: the number of hops L
    :type layers: int
    :return: the n x o embeddings
    :rtype: np.ndarray
    """
    if encoder_weights.shape[0] != g.d:
        raise ShapeError("Encoder expects %d features, graph has %d" % (encoder_weights.shape[0], g.d))
    return neighborhood_propagate(g, layers) @ encoder_weights
