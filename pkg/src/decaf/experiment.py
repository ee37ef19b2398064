"""
End-to-end experiments: generate, shift, split, train, predict, evaluate.
"""
import json
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Optional, Tuple, Dict

import numpy as np

from decaf.causal import (DecafTrainer, DecafFit, background_counterfactual, predict_with_background, shared_for_graph,
                          DecafModel, Counterfactual)
from decaf.config import (ExperimentConfig, save_config, METHOD_DECAF, SPLIT_LABEL_LEAVEOUT)
from decaf.erm import train_erm, predict_erm
from decaf.errors import DecafError, StageError
from decaf.graph import GraphData, BackboneModel
from decaf.logging import LoggableObject
from decaf.metrics import MetricsReport, split_scores
from decaf.scmgen import (ScmParams, ShiftSpec, LatentSample, SHIFT_NONE, make_recipe, sample_latents, generate_graph,
                          apply_shift)
from decaf.serialization.checkpoint import save_checkpoint
from decaf.serialization.dataset import load_dataset, dataset_fingerprint
from decaf.splits import SplitMasks, soft_label_leaveout, random_split

STAGE_GENERATE = "generate"
STAGE_SHIFT = "shift"
STAGE_SPLIT = "split"
STAGE_TRAIN = "train"
STAGE_PREDICT = "predict"
STAGE_EVALUATE = "evaluate"
STAGE_WRITE = "write"

TEST_SEED_OFFSET = 1000003
""" the shifted test graph draws latents and edges with seed + offset """

SPLIT_TRAIN = "train"
SPLIT_VAL = "val"
SPLIT_TEST = "test"
SPLIT_ID_TEST = "id_test"
""" held-out nodes of the training graph when testing on a shifted graph """

FILE_CONFIG = "config.json"
FILE_REPORT = "report.json"
FILE_TIMING = "timing.json"
FILE_CHECKPOINT = "checkpoint.json"


@contextmanager
def stage(label: str):
    """
    Re-raises any exception of the block as StageError with the label.

    :param label: the stage label
    :type label: str
    """
    try:
        yield
    except StageError:
        raise
    except Exception as e:
        raise StageError(label, e)


@dataclass
class ExperimentData:
    """
    The graphs and splits of an experiment. Without a shift the test graph is
    the training graph and testing uses the test mask.
    """
    g_train: GraphData
    g_test: GraphData
    masks: SplitMasks
    shifted: bool
    params: Optional[ScmParams] = None


@dataclass
class SyntheticGraphs:
    """
    A generated training graph and its (possibly shifted) test graph together
    with the parameters and latents they were drawn from.
    """
    params: ScmParams
    test_params: ScmParams
    latents_train: LatentSample
    latents_test: LatentSample
    g_train: GraphData
    g_test: GraphData

    @property
    def train(self) -> Tuple[ScmParams, LatentSample, GraphData]:
        return self.params, self.latents_train, self.g_train

    @property
    def test(self) -> Tuple[ScmParams, LatentSample, GraphData]:
        return self.test_params, self.latents_test, self.g_test


def generate_graphs(config: ExperimentConfig) -> SyntheticGraphs:
    """
    Generates the graphs of the configured recipe. Without a shift the test
    graph is the training graph.

    :param config: the experiment config
    :type config: ExperimentConfig
    :return: the graphs
    :rtype: SyntheticGraphs
    """
    seed = config.get("seed")
    shift = config.get("shift")
    n = config.get("num_nodes")
    with stage(STAGE_GENERATE):
        degree = config.get("mean_degree")
        params = make_recipe(config.get("recipe"), seed, num_nodes=n,
                             target_mean_degree=degree if degree > 0 else None)
        latents = sample_latents(params, n, seed)
        g_train = generate_graph(params, latents, seed)
    with stage(STAGE_SHIFT):
        if shift == SHIFT_NONE:
            return SyntheticGraphs(params, params, latents, latents, g_train, g_train)
        shifted = apply_shift(params, ShiftSpec(kind=shift, magnitude=config.get("magnitude"), seed=seed))
        test_seed = seed + TEST_SEED_OFFSET
        test_latents = sample_latents(shifted, n, test_seed)
        g_test = generate_graph(shifted, test_latents, test_seed)
    return SyntheticGraphs(params, shifted, latents, test_latents, g_train, g_test)


def build_graphs(config: ExperimentConfig) -> Tuple[GraphData, GraphData, Optional[ScmParams]]:
    """
    Generates (or loads) the training graph and the test graph.

    :param config: the experiment config
    :type config: ExperimentConfig
    :return: training graph, test graph (identical object if not shifted), SCM parameters (None for stored datasets)
    :rtype: tuple
    """
    shift = config.get("shift")
    if len(config.get("dataset")) > 0:
        with stage(STAGE_GENERATE):
            g_train = load_dataset(config.get("dataset"))
        with stage(STAGE_SHIFT):
            if len(config.get("test_dataset")) > 0:
                g_test = load_dataset(config.get("test_dataset"))
            elif shift != SHIFT_NONE:
                raise DecafError("Shift '%s' requires a recipe or a test dataset" % shift)
            else:
                g_test = g_train
        return g_train, g_test, None

    synthetic = generate_graphs(config)
    return synthetic.g_train, synthetic.g_test, synthetic.params


def build_split(config: ExperimentConfig, g: GraphData) -> SplitMasks:
    """
    Splits the training graph according to the config.
    """
    with stage(STAGE_SPLIT):
        if config.get("split") == SPLIT_LABEL_LEAVEOUT:
            masks = soft_label_leaveout(g.labels, num_groups=config.get("split_groups"),
                                        major_share=config.get("major_share"), seed=config.get("seed"),
                                        num_classes=g.num_classes)
        else:
            masks = random_split(g.n, seed=config.get("seed"))
        masks.check()
    return masks


def build_data(config: ExperimentConfig) -> ExperimentData:
    g_train, g_test, params = build_graphs(config)
    masks = build_split(config, g_train)
    return ExperimentData(g_train=g_train, g_test=g_test, masks=masks, shifted=g_test is not g_train, params=params)


def decaf_background(model: DecafModel, fit_shared, data: ExperimentData, seed: int) -> Counterfactual:
    """
    The background sample is always drawn from the training nodes of the training graph.
    """
    return background_counterfactual(model, fit_shared, data.g_train, data.masks.train, seed)


def predict_graphs(model, data: ExperimentData, seed: int, shared=None) -> Tuple[np.ndarray, np.ndarray]:
    """
    Predicts the classes of all nodes of the training and the test graph.

    :param model: the trained DecafModel or BackboneModel
    :param data: the graphs and splits
    :type data: ExperimentData
    :param seed: the seed of the background sample
    :type seed: int
    :param shared: the shared embeddings of the training graph, computed if None
    :return: the predicted classes on the training graph and on the test graph
    :rtype: tuple
    """
    if isinstance(model, BackboneModel):
        pred_train = predict_erm(model, data.g_train)[1]
        pred_test = predict_erm(model, data.g_test)[1] if data.shifted else pred_train
        return pred_train, pred_test
    if shared is None:
        shared = shared_for_graph(model, data.g_train)
    cf = decaf_background(model, shared, data, seed)
    pred_train = predict_with_background(model, shared, data.g_train, cf)[1]
    if not data.shifted:
        return pred_train, pred_train
    shared_test = shared_for_graph(model, data.g_test)
    return pred_train, predict_with_background(model, shared_test, data.g_test, cf)[1]


class Experiment(LoggableObject):
    """
    Runs a single configured experiment, optionally writing config, report
    and checkpoint into an output directory.
    """

    def __init__(self, config: ExperimentConfig, output_dir: Optional[str] = None):
        """
        Initializes the experiment.

        :param config: the configuration
        :type config: ExperimentConfig
        :param output_dir: the directory for the results, nothing is written if None
        :type output_dir: str
        """
        self.config = config
        self.output_dir = output_dir
        self.model = None

    def train(self, data: ExperimentData):
        """
        Trains the configured method.

        :return: the model and, for the causal method, the training outcome
        :rtype: tuple
        """
        config = self.config
        with stage(STAGE_TRAIN):
            if config.get("method") == METHOD_DECAF:
                fit = DecafTrainer(config).train(data.g_train, data.masks)
                return fit.model, fit
            model, trace = train_erm(data.g_train, data.masks, config.get("backbone"), config)
            return model, trace

    def evaluate(self, data: ExperimentData, pred_train: np.ndarray, pred_test: np.ndarray) -> Dict[str, Dict[str, float]]:
        """
        Scores per split.
        """
        k = data.g_train.num_classes
        with stage(STAGE_EVALUATE):
            labels = data.g_train.labels
            masks = data.masks
            scores = {
                SPLIT_TRAIN: split_scores(labels[masks.train], pred_train[masks.train], k),
                SPLIT_VAL: split_scores(labels[masks.val], pred_train[masks.val], k),
            }
            if data.shifted:
                scores[SPLIT_TEST] = split_scores(data.g_test.labels, pred_test, k)
                scores[SPLIT_ID_TEST] = split_scores(labels[masks.test], pred_train[masks.test], k)
            else:
                scores[SPLIT_TEST] = split_scores(labels[masks.test], pred_train[masks.test], k)
        return scores

    def run(self) -> MetricsReport:
        """
        Executes all stages.

        :return: the metrics
        :rtype: MetricsReport
        """
        config = self.config
        start = time.perf_counter()
        data = build_data(config)
        if config.is_debug:
            self.log("train graph: %d nodes, %d edges; shifted test graph: %s"
                     % (data.g_train.n, len(data.g_train.edges()), str(data.shifted)))
        self.model, outcome = self.train(data)
        with stage(STAGE_PREDICT):
            shared = outcome.shared if isinstance(outcome, DecafFit) else None
            pred_train, pred_test = predict_graphs(self.model, data, config.get("seed"), shared=shared)
        scores = self.evaluate(data, pred_train, pred_test)
        extra = {"method": config.get("method"), "shifted": data.shifted}
        if isinstance(outcome, DecafFit):
            extra["gamma"] = self.model.gamma
            extra["stages"] = [t.to_dict() for t in outcome.traces]
        else:
            extra["stages"] = [outcome.to_dict()]
        if data.shifted:
            extra["test_dataset_fingerprint"] = dataset_fingerprint(data.g_test)
        report = MetricsReport(
            scores=scores, fingerprint=config.fingerprint(), seed=config.get("seed"),
            dataset_fingerprint=dataset_fingerprint(data.g_train),
            wall_time=time.perf_counter() - start, extra=extra)
        if self.output_dir is not None:
            with stage(STAGE_WRITE):
                self.write(report)
        return report

    def write(self, report: MetricsReport):
        """
        Writes config, report (without wall time), timing and checkpoint.

        :param report: the report to write
        :type report: MetricsReport
        """
        os.makedirs(self.output_dir, exist_ok=True)
        save_config(self.config, os.path.join(self.output_dir, FILE_CONFIG))
        with open(os.path.join(self.output_dir, FILE_REPORT), "w") as fp:
            json.dump(report.to_dict(include_wall_time=False), fp, indent=2, sort_keys=True)
            fp.write("\n")
        with open(os.path.join(self.output_dir, FILE_TIMING), "w") as fp:
            json.dump({"wall_time": report.wall_time}, fp)
            fp.write("\n")
        save_checkpoint(self.model, os.path.join(self.output_dir, FILE_CHECKPOINT), report.fingerprint)


def run_experiment(config: ExperimentConfig, output_dir: Optional[str] = None) -> MetricsReport:
    """
    Runs the experiment; errors carry the label of the stage they occurred in.

    :param config: the configuration
    :type config: ExperimentConfig
    :param output_dir: the directory for config, report and checkpoint, None to skip writing
    :type output_dir: str
    :return: the metrics
    :rtype: MetricsReport
    """
    return Experiment(config, output_dir=output_dir).run()


def load_report(path: str) -> MetricsReport:
    """
    Reads a report, either the JSON file or an experiment directory containing it.
    """
    if os.path.isdir(path):
        path = os.path.join(path, FILE_REPORT)
    with open(path, "r") as fp:
        return MetricsReport.from_dict(json.load(fp))
