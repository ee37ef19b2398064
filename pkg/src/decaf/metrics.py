"""
Classification scores and the aggregation of several experiment reports.
"""
from dataclasses import dataclass, field
from typing import Sequence, Dict, List, Optional

import numpy as np
from sklearn.metrics import f1_score, accuracy_score

from decaf.errors import DecafError, ShapeError
from decaf.numerics import check_labels

METRIC_MACRO_F1 = "macro_f1"
METRIC_MICRO_F1 = "micro_f1"
METRIC_BINARY_F1 = "binary_f1"
METRIC_ACCURACY = "accuracy"


def _check(y_true: Sequence[int], y_pred: Sequence[int], k: int):
    y_true = check_labels(y_true, k)
    y_pred = check_labels(y_pred, k)
    if len(y_true) != len(y_pred):
        raise ShapeError("Got %d true and %d predicted labels" % (len(y_true), len(y_pred)))
    return y_true, y_pred


def macro_f1(y_true: Sequence[int], y_pred: Sequence[int], k: int) -> float:
    """
    Unweighted mean of the per-class F1 scores over all k classes; a class
    without true and predicted members scores 0.

    :param y_true: the true labels
    :param y_pred: the predicted labels
    :param k: the number of classes
    :type k: int
    :return: the score
    :rtype: float
    """
    y_true, y_pred = _check(y_true, y_pred, k)
    if len(y_true) == 0:
        return 0.0
    return float(f1_score(y_true, y_pred, labels=list(range(k)), average="macro", zero_division=0))


def micro_f1(y_true: Sequence[int], y_pred: Sequence[int], k: int) -> float:
    y_true, y_pred = _check(y_true, y_pred, k)
    if len(y_true) == 0:
        return 0.0
    return float(f1_score(y_true, y_pred, labels=list(range(k)), average="micro", zero_division=0))


def binary_f1(y_true: Sequence[int], y_pred: Sequence[int]) -> float:
    """
    F1 of class 1 for two-class problems.
    """
    y_true, y_pred = _check(y_true, y_pred, 2)
    if len(y_true) == 0:
        return 0.0
    return float(f1_score(y_true, y_pred, labels=[0, 1], pos_label=1, average="binary", zero_division=0))


def accuracy(y_true: Sequence[int], y_pred: Sequence[int], k: int) -> float:
    y_true, y_pred = _check(y_true, y_pred, k)
    if len(y_true) == 0:
        return 0.0
    return float(accuracy_score(y_true, y_pred))


def split_scores(y_true: Sequence[int], y_pred: Sequence[int], k: int) -> Dict[str, float]:
    """
    All scores for one split; binary F1 only for two classes.

    :param y_true: the true labels
    :param y_pred: the predicted labels
    :param k: the number of classes
    :type k: int
    :return: metric name -> score
    :rtype: dict
    """
    result = {
        METRIC_MACRO_F1: macro_f1(y_true, y_pred, k),
        METRIC_MICRO_F1: micro_f1(y_true, y_pred, k),
        METRIC_ACCURACY: accuracy(y_true, y_pred, k),
    }
    if k == 2:
        result[METRIC_BINARY_F1] = binary_f1(y_true, y_pred)
    return result


@dataclass
class MetricsReport:
    """
    The scores per split (train/val/test) of one experiment plus provenance.
    """
    scores: Dict[str, Dict[str, float]]
    fingerprint: str
    seed: int
    dataset_fingerprint: str = ""
    wall_time: float = 0.0
    extra: Dict = field(default_factory=dict)

    def score(self, split: str, metric: str = METRIC_MACRO_F1) -> float:
        if (split not in self.scores) or (metric not in self.scores[split]):
            raise DecafError("No %s score for split %s" % (metric, split))
        return self.scores[split][metric]

    def to_dict(self, include_wall_time: bool = True) -> Dict:
        """
        Returns the report as dictionary.

        :param include_wall_time: whether to include the (non-reproducible) wall time
        :type include_wall_time: bool
        :return: the dictionary
        :rtype: dict
        """
        result = {
            "scores": self.scores,
            "fingerprint": self.fingerprint,
            "seed": self.seed,
            "dataset_fingerprint": self.dataset_fingerprint,
            "extra": self.extra,
        }
        if include_wall_time:
            result["wall_time"] = self.wall_time
        return result

    @classmethod
    def from_dict(cls, d: Dict) -> 'MetricsReport':
        for key in ["scores", "fingerprint", "seed"]:
            if key not in d:
                raise DecafError("Report lacks key: %s" % key)
        return cls(scores=d["scores"], fingerprint=d["fingerprint"], seed=int(d["seed"]),
                   dataset_fingerprint=d.get("dataset_fingerprint", ""),
                   wall_time=float(d.get("wall_time", 0.0)), extra=d.get("extra", dict()))


def aggregate_reports(reports: List[MetricsReport], splits: Optional[List[str]] = None) -> Dict[str, Dict[str, Dict[str, float]]]:
    """
    Median, interquartile range, mean and (sample) standard deviation of every
    metric across the reports, per split.

    :param reports: the reports, e.g., one per seed
    :type reports: list
    :param splits: the splits to aggregate, all splits of the first report if None
    :type splits: list
    :return: split -> metric -> statistic -> value
    :rtype: dict
    """
    if len(reports) == 0:
        raise DecafError("No reports to aggregate")
    if splits is None:
        splits = sorted(reports[0].scores.keys())
    result = dict()
    for split in splits:
        result[split] = dict()
        for metric in sorted(reports[0].scores[split].keys()):
            values = np.array([r.score(split, metric) for r in reports], dtype=np.float64)
            q1, median, q3 = np.percentile(values, [25, 50, 75])
            result[split][metric] = {
                "median": float(median),
                "iqr": float(q3 - q1),
                "mean": float(np.mean(values)),
                "std": float(np.std(values, ddof=1)) if len(values) > 1 else 0.0,
                "count": len(values),
            }
    return result
