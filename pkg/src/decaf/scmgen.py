"""
Synthetic graphs from a structural causal model: a latent vector z per node
generates the features, the label and the pairwise edge probabilities.
"""
import copy
from dataclasses import dataclass
from typing import Optional

import numpy as np

from decaf.errors import DecafError
from decaf.graph import GraphData, mean_adjacency
from decaf.logging import warn
from decaf.numerics import Matrix

LABEL_DIRECT = "direct"
LABEL_NEIGHBOR_MIXED = "neighbor-mixed"
LABEL_MODES = [LABEL_DIRECT, LABEL_NEIGHBOR_MIXED]

SHIFT_NONE = "none"
SHIFT_COVARIATE = "covariate"
SHIFT_CONCEPT_X = "concept-x"
SHIFT_CONCEPT_A = "concept-a"
SHIFTS = [SHIFT_NONE, SHIFT_COVARIATE, SHIFT_CONCEPT_X, SHIFT_CONCEPT_A]

RECIPE_H_FEAT = "h-feat"
RECIPE_QTR_FEAT = "qtr-feat"
RECIPE_FULL_FEAT = "full-feat"
RECIPES = [RECIPE_H_FEAT, RECIPE_QTR_FEAT, RECIPE_FULL_FEAT]

RECIPE_LATENT_DIM = 16
RECIPE_CLASSES = 4
RECIPE_NODES = 8000

RECIPE_FEATURE_OFFSET = 1.0
""" the recipes observe non-centered features x = M_f z + 1 """

RECIPE_MEAN_DEGREE = {
    RECIPE_H_FEAT: 20.0,
    RECIPE_QTR_FEAT: 20.0,
    RECIPE_FULL_FEAT: 9.0,
}
""" desk-scale mean degree targets, full-feat keeps the sparsity of the 8000 node version """

PAIR_BLOCK = 32
""" number of source rows per edge sampling block """

PSD_TOLERANCE = 1e-9


@dataclass
class ScmParams:
    """
    All maps of the generative process. Shapes: feature_map d x p, label_map
    classes x p, edge_source/edge_target q x p, neighbor_map o x p, offsets as
    1-D arrays.
    """
    feature_map: Matrix
    feature_offset: np.ndarray
    label_map: Matrix
    label_offset: np.ndarray
    edge_source: Matrix
    edge_target: Matrix
    neighbor_map: Matrix
    density: float
    latent_mean: np.ndarray
    latent_cov: Matrix
    label_mode: str = LABEL_DIRECT

    @property
    def latent_dim(self) -> int:
        return self.latent_mean.shape[0]

    @property
    def num_features(self) -> int:
        return self.feature_map.shape[0]

    @property
    def num_classes(self) -> int:
        return self.label_map.shape[0]

    def validate(self):
        """
        Checks shape consistency and value ranges.
        """
        p = self.latent_dim
        for name in ["feature_map", "label_map", "edge_source", "edge_target", "neighbor_map"]:
            m = getattr(self, name)
            if (m.ndim != 2) or (m.shape[1] != p):
                raise DecafError("%s must have %d columns, got shape %s" % (name, p, str(m.shape)))
        if self.edge_source.shape != self.edge_target.shape:
            raise DecafError("edge_source %s and edge_target %s differ in shape"
                             % (str(self.edge_source.shape), str(self.edge_target.shape)))
        if self.feature_offset.shape != (self.num_features,):
            raise DecafError("feature_offset must have length %d" % self.num_features)
        if self.label_offset.shape != (self.num_classes,):
            raise DecafError("label_offset must have length %d" % self.num_classes)
        if self.latent_cov.shape != (p, p):
            raise DecafError("latent_cov must be %dx%d" % (p, p))
        if not (0.0 <= self.density <= 1.0):
            raise DecafError("density must lie in [0, 1], got: %f" % self.density)
        if self.label_mode not in LABEL_MODES:
            raise DecafError("Unknown label mode: %s" % self.label_mode)

    def copy(self) -> 'ScmParams':
        return copy.deepcopy(self)


@dataclass
class LatentSample:
    z: Matrix


@dataclass
class ShiftSpec:
    kind: str = SHIFT_NONE
    magnitude: float = 0.0
    seed: int = 0


@dataclass
class DensityCalibration:
    density: float
    expected_degree: float
    clamped: bool


def _latent_factor(cov: Matrix) -> Matrix:
    """
    Returns F with F F^T = cov, raises an exception if cov is not symmetric PSD.
    """
    if not np.allclose(cov, cov.T, atol=PSD_TOLERANCE):
        raise DecafError("Latent covariance is not symmetric")
    w, v = np.linalg.eigh(cov)
    if w.min() < -PSD_TOLERANCE * max(1.0, abs(w.max())):
        raise DecafError("Latent covariance is not positive semidefinite (smallest eigenvalue %g)" % w.min())
    return v * np.sqrt(np.clip(w, 0.0, None))


def sample_latents(params: ScmParams, n: int, seed: int) -> LatentSample:
    """
    Draws n latent vectors from Normal(latent_mean, latent_cov).

    :param params: the generative parameters
    :type params: ScmParams
    :param n: the number of nodes
    :type n: int
    :param seed: the seed for the random generator
    :type seed: int
    :return: the latent sample
    :rtype: LatentSample
    """
    if n < 2:
        raise DecafError("Need at least 2 nodes, got: %d" % n)
    factor = _latent_factor(params.latent_cov)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((n, params.latent_dim))
    return LatentSample(z=params.latent_mean + noise @ factor.T)


def _pair_probabilities(params: ScmParams, z: Matrix, rows: np.ndarray) -> Matrix:
    """
    c / (||M_s z_i - M_o z_j||^2 + 1) for the given source rows i and all targets j.
    """
    source = z[rows] @ params.edge_source.T
    target = z @ params.edge_target.T
    diff = source[:, None, :] - target[None, :, :]
    return params.density / (np.sum(diff * diff, axis=2) + 1.0)


def edge_probabilities(params: ScmParams, z: Matrix) -> Matrix:
    """
    The symmetric n x n matrix of edge probabilities; entry (i, j) with i < j
    uses z_i as source and z_j as target, the diagonal is zero.

    :param params: the generative parameters
    :type params: ScmParams
    :param z: the n x p latents
    :type z: np.ndarray
    :return: the probabilities
    :rtype: np.ndarray
    """
    n = z.shape[0]
    result = np.zeros((n, n))
    for start in range(0, n, PAIR_BLOCK):
        rows = np.arange(start, min(start + PAIR_BLOCK, n))
        result[rows] = _pair_probabilities(params, z, rows)
    upper = np.triu(result, k=1)
    return upper + upper.T


def _sample_edges(params: ScmParams, z: Matrix, seed: int) -> np.ndarray:
    """
    Independent Bernoulli draws over the unordered pairs; each row block has
    its own generator derived from (seed, block) so the draws do not depend on
    how the blocks are scheduled.
    """
    n = z.shape[0]
    cols = np.arange(n)
    edges = []
    for block, start in enumerate(range(0, n, PAIR_BLOCK)):
        rows = np.arange(start, min(start + PAIR_BLOCK, n))
        probs = _pair_probabilities(params, z, rows)
        rng = np.random.default_rng([seed, block])
        hits = (rng.random(probs.shape) < probs) & (cols[None, :] > rows[:, None])
        r, c = np.nonzero(hits)
        edges.append(np.stack([rows[r], c], axis=1))
    if len(edges) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return np.concatenate(edges, axis=0)


def generate_graph(params: ScmParams, latents: LatentSample, seed: int) -> GraphData:
    """
    Generates features, edges and labels from the latents.

    :param params: the generative parameters
    :type params: ScmParams
    :param latents: the latent sample
    :type latents: LatentSample
    :param seed: the seed for the edge draws
    :type seed: int
    :return: the graph
    :rtype: GraphData
    """
    params.validate()
    z = latents.z
    if z.shape[1] != params.latent_dim:
        raise DecafError("Latents have %d columns, expected %d" % (z.shape[1], params.latent_dim))
    if seed < 0:
        raise DecafError("Seed must be non-negative, got: %d" % seed)
    features = z @ params.feature_map.T + params.feature_offset
    edges = _sample_edges(params, z, seed)
    # labels only need the edges in neighbor-mixed mode, a temporary graph provides the mean operator
    g = GraphData.from_edges(features, np.zeros(z.shape[0], dtype=np.int64), edges, params.num_classes,
                             require_all_classes=False)
    if params.label_mode == LABEL_NEIGHBOR_MIXED:
        z_bar = np.asarray(mean_adjacency(g) @ z)
        isolated = g.degrees() == 0
        z_bar[isolated] = z[isolated]
        mixed = 0.5 * z + 0.5 * z_bar
    else:
        mixed = z
    scores = mixed @ params.label_map.T + params.label_offset
    g.labels = np.argmax(scores, axis=1).astype(np.int64)
    missing = np.setdiff1d(np.arange(params.num_classes), g.labels)
    if len(missing) > 0:
        raise DecafError("Generated graph has no nodes for classes %s, use more nodes" % str(missing.tolist()))
    return g


def latent_neighborhood(params: ScmParams, latents: LatentSample, g: GraphData) -> Matrix:
    """
    The latent neighborhood representation M_a mean_{j in N(i)} z_j (zero for isolated nodes).
    """
    return np.asarray(mean_adjacency(g) @ latents.z) @ params.neighbor_map.T


def spillover_bound(params: ScmParams, g: GraphData, node: int, perturbation: float) -> float:
    """
    Upper bound on the change (max-norm) of the latent neighborhood representation
    of the node when a single neighbor's latent moves by the given L2 distance.

    :param params: the generative parameters
    :type params: ScmParams
    :param g: the graph
    :type g: GraphData
    :param node: the node whose representation is considered
    :type node: int
    :param perturbation: the L2 norm of the latent perturbation
    :type perturbation: float
    :return: the bound, 0 for isolated nodes
    :rtype: float
    """
    degree = g.degrees()[node]
    if degree == 0:
        return 0.0
    return float(np.max(np.linalg.norm(params.neighbor_map, axis=1)) * perturbation / degree)


def expected_mean_degree(params: ScmParams, latents: LatentSample) -> float:
    """
    Expected mean degree under the edge model for the given latents.
    """
    z = latents.z
    n = z.shape[0]
    cols = np.arange(n)
    total = 0.0
    for start in range(0, n, PAIR_BLOCK):
        rows = np.arange(start, min(start + PAIR_BLOCK, n))
        probs = _pair_probabilities(params, z, rows)
        total += float(np.sum(probs[cols[None, :] > rows[:, None]]))
    return 2.0 * total / n


def calibrate_density(params: ScmParams, latents: LatentSample, target_mean_degree: float,
                      tolerance: float = 1e-3, max_iterations: int = 200) -> DensityCalibration:
    """
    Finds the density constant c whose expected mean degree matches the target,
    by bisection over [0, 1]. Unattainable targets get clamped to c = 1.

    :param params: the generative parameters (density is ignored)
    :type params: ScmParams
    :param latents: the latents to calibrate on
    :type latents: LatentSample
    :param target_mean_degree: the desired mean degree
    :type target_mean_degree: float
    :param tolerance: the relative tolerance
    :type tolerance: float
    :return: the calibration result
    :rtype: DensityCalibration
    """
    if target_mean_degree < 0:
        raise DecafError("Target mean degree must be non-negative, got: %f" % target_mean_degree)
    if target_mean_degree == 0:
        return DensityCalibration(density=0.0, expected_degree=0.0, clamped=False)
    unit = params.copy()
    unit.density = 1.0
    # the expected degree is linear in c, the weights are computed once
    full = expected_mean_degree(unit, latents)
    if full < target_mean_degree:
        warn("Target mean degree %.3f unattainable, maximum is %.3f; clamping density to 1" % (target_mean_degree, full))
        return DensityCalibration(density=1.0, expected_degree=full, clamped=True)
    lo, hi = 0.0, 1.0
    c = 1.0
    for _ in range(max_iterations):
        c = 0.5 * (lo + hi)
        degree = c * full
        if abs(degree - target_mean_degree) <= tolerance * target_mean_degree:
            break
        if degree < target_mean_degree:
            lo = c
        else:
            hi = c
    return DensityCalibration(density=c, expected_degree=c * full, clamped=False)


def make_recipe(name: str, seed: int, num_nodes: int = RECIPE_NODES,
                target_mean_degree: Optional[float] = None) -> ScmParams:
    """
    Creates the parameters of one of the synthetic datasets: h-feat (features
    see half of z, edges see all of it), qtr-feat (features see a quarter,
    edges the remaining three quarters) and full-feat (features see all of z,
    random edges, labels mix in the neighbors' latents).

    :param name: the recipe name
    :type name: str
    :param seed: the seed for the label map and the calibration latents
    :type seed: int
    :param num_nodes: the graph size the density gets calibrated for
    :type num_nodes: int
    :param target_mean_degree: the mean degree, None for the recipe default
    :type target_mean_degree: float
    :return: the parameters
    :rtype: ScmParams
    """
    if name not in RECIPES:
        raise DecafError("Unknown recipe '%s', available: %s" % (name, str(RECIPES)))
    p = RECIPE_LATENT_DIM
    k = RECIPE_CLASSES
    rng = np.random.default_rng(seed)
    label_map = rng.standard_normal((k, p))
    label_mode = LABEL_DIRECT
    if name == RECIPE_H_FEAT:
        feature_map = np.eye(8, p)
        edge_map = label_map.copy()
    elif name == RECIPE_QTR_FEAT:
        feature_map = np.eye(4, p)
        edge_map = label_map.copy()
        edge_map[:, :4] = 0.0
    else:
        feature_map = np.eye(p)
        edge_map = np.zeros((k, p))
        label_mode = LABEL_NEIGHBOR_MIXED
    result = ScmParams(
        feature_map=feature_map,
        feature_offset=np.full(feature_map.shape[0], RECIPE_FEATURE_OFFSET),
        label_map=label_map,
        label_offset=np.zeros(k),
        edge_source=edge_map,
        edge_target=edge_map.copy(),
        neighbor_map=np.eye(p),
        density=1.0,
        latent_mean=np.zeros(p),
        latent_cov=np.eye(p),
        label_mode=label_mode)
    if target_mean_degree is None:
        target_mean_degree = RECIPE_MEAN_DEGREE[name]
    latents = sample_latents(result, num_nodes, seed)
    result.density = calibrate_density(result, latents, target_mean_degree).density
    result.validate()
    return result


def _interpolate(m: np.ndarray, magnitude: float, rng: np.random.Generator) -> np.ndarray:
    return (1.0 - magnitude) * m + magnitude * rng.standard_normal(m.shape)


def apply_shift(params: ScmParams, spec: ShiftSpec) -> ScmParams:
    """
    Returns shifted parameters. Covariate shift moves the latent mean along a
    random unit direction; concept shift-X interpolates the feature map and
    offset towards a random matrix; concept shift-A does the same for the two
    edge maps. Everything else is copied unchanged.

    :param params: the parameters to shift
    :type params: ScmParams
    :param spec: the shift to apply
    :type spec: ShiftSpec
    :return: the new parameters
    :rtype: ScmParams
    """
    if spec.magnitude < 0:
        raise DecafError("Shift magnitude must be non-negative, got: %f" % spec.magnitude)
    if spec.kind not in SHIFTS:
        raise DecafError("Unknown shift '%s', available: %s" % (spec.kind, str(SHIFTS)))
    result = params.copy()
    if (spec.kind == SHIFT_NONE) or (spec.magnitude == 0):
        return result
    rng = np.random.default_rng(spec.seed)
    if spec.kind == SHIFT_COVARIATE:
        u = rng.standard_normal(params.latent_dim)
        u /= np.linalg.norm(u)
        result.latent_mean = params.latent_mean + spec.magnitude * u
    elif spec.kind == SHIFT_CONCEPT_X:
        result.feature_map = _interpolate(params.feature_map, spec.magnitude, rng)
        result.feature_offset = _interpolate(params.feature_offset, spec.magnitude, rng)
    else:
        result.edge_source = _interpolate(params.edge_source, spec.magnitude, rng)
        result.edge_target = _interpolate(params.edge_target, spec.magnitude, rng)
    return result
