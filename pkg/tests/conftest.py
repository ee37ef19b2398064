import numpy as np
import pytest

from decaf.config import ExperimentConfig
from decaf.graph import GraphData


def random_graph(n: int, d: int, k: int, p: float, seed: int, isolated: int = 0) -> GraphData:
    """
    Erdos-Renyi graph with standard normal features and labels i mod k; the
    last `isolated` nodes get no edges.
    """
    rng = np.random.default_rng(seed)
    features = rng.standard_normal((n, d))
    labels = np.arange(n) % k
    connected = n - isolated
    edges = [(i, j) for i in range(connected) for j in range(i + 1, connected) if rng.random() < p]
    return GraphData.from_edges(features, labels, edges, k)


@pytest.fixture
def make_graph():
    return random_graph


@pytest.fixture
def small_graph() -> GraphData:
    return random_graph(30, 5, 3, 0.2, 1)


@pytest.fixture
def fast_config() -> ExperimentConfig:
    return ExperimentConfig(options={
        "hidden": 4,
        "layers": 2,
        "epochs": 15,
        "patience": 15,
        "lr": 0.01,
        "cf_samples": 3,
        "step_ratio": 2,
        "seed": 3,
    })
