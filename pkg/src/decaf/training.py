"""
The optimization loop shared by all trainers: mini-batches, Adam updates of
one or more parameter groups and early stopping on a validation score.
"""
from dataclasses import dataclass, field
from typing import Callable, List, Sequence, Tuple

import numpy as np

from decaf.config import ExperimentConfig
from decaf.errors import DivergenceError, NumericError, DecafError
from decaf.logging import LoggableObject
from decaf.numerics import Matrix, init_adam, adam_step

Objective = Callable[[List[List[Matrix]], np.ndarray], Tuple[float, List[Matrix]]]
""" maps the current parameters of all groups and the batch node ids to loss and gradients of its own group """

Validation = Callable[[List[List[Matrix]]], float]
""" maps the current parameters of all groups to a score, higher is better """


@dataclass
class ParameterGroup:
    """
    Parameters that are updated together by their own objective, steps times per round.
    """
    name: str
    params: List[Matrix]
    objective: Objective
    steps: int = 1


@dataclass
class TrainingTrace:
    """
    What happened during training of a single stage.
    """
    stage: str
    losses: List[float] = field(default_factory=list)
    val_scores: List[float] = field(default_factory=list)
    best_so_far: List[float] = field(default_factory=list)
    best_epoch: int = -1
    best_score: float = -np.inf

    @property
    def epochs(self) -> int:
        return len(self.losses)

    def to_dict(self) -> dict:
        return {
            "stage": self.stage,
            "epochs": self.epochs,
            "best_epoch": self.best_epoch,
            "best_score": float(self.best_score),
            "losses": [float(x) for x in self.losses],
            "val_scores": [float(x) for x in self.val_scores],
        }


def node_batches(ids: np.ndarray, batch: int, rng: np.random.Generator) -> List[np.ndarray]:
    """
    Splits the node ids into shuffled mini-batches; a batch size of 0 (or one
    that covers all ids) yields a single full batch in the original order.

    :param ids: the node ids
    :type ids: np.ndarray
    :param batch: the batch size, 0 for full batch
    :type batch: int
    :param rng: the generator for the shuffling
    :type rng: np.random.Generator
    :return: the batches
    :rtype: list
    """
    if (batch <= 0) or (batch >= len(ids)):
        return [ids]
    shuffled = ids[rng.permutation(len(ids))]
    return [shuffled[i:i + batch] for i in range(0, len(shuffled), batch)]


class Trainer(LoggableObject):
    """
    Runs Adam on the parameter groups in rounds: per batch, every group takes
    its number of steps in the order of the groups. After each epoch the
    validation score is computed; the best parameters are restored at the end.
    """

    def __init__(self, stage: str, config: ExperimentConfig):
        """
        Initializes the trainer.

        :param stage: the label used in logs and errors
        :type stage: str
        :param config: the hyperparameters (lr, weight_decay, epochs, patience, batch)
        :type config: ExperimentConfig
        """
        self.stage = stage
        self.config = config

    def _get_log_prefix(self) -> str:
        return "%s[%s]" % (type(self).__name__, self.stage)

    def fit(self, groups: Sequence[ParameterGroup], validate: Validation, train_ids: np.ndarray,
            rng: np.random.Generator) -> Tuple[List[List[Matrix]], TrainingTrace]:
        """
        Trains the groups.

        :param groups: the parameter groups to optimize
        :param validate: computes the validation score
        :param train_ids: the ids of the training nodes
        :type train_ids: np.ndarray
        :param rng: the generator for mini-batch sampling
        :type rng: np.random.Generator
        :return: the best parameters per group and the trace
        :rtype: tuple
        """
        if len(train_ids) == 0:
            raise DecafError("%s: no training nodes" % self.stage)
        lr = self.config.get("lr")
        decay = self.config.get("weight_decay")
        patience = self.config.get("patience")
        current = [list(g.params) for g in groups]
        states = [init_adam(p, learning_rate=lr, weight_decay=decay) for p in current]
        trace = TrainingTrace(stage=self.stage)
        best = [list(p) for p in current]
        for epoch in range(self.config.get("epochs")):
            loss = np.nan
            for batch in node_batches(train_ids, self.config.get("batch"), rng):
                for i, group in enumerate(groups):
                    for step in range(group.steps):
                        try:
                            value, grads = group.objective(current, batch)
                        except NumericError as e:
                            raise DivergenceError(self.stage, epoch, str(e))
                        if not np.isfinite(value):
                            raise DivergenceError(self.stage, epoch)
                        if (i == 0) and (step == 0):
                            loss = value
                        current[i], states[i] = adam_step(current[i], grads, states[i])
            score = float(validate(current))
            trace.losses.append(loss)
            trace.val_scores.append(score)
            if score > trace.best_score:
                trace.best_score = score
                trace.best_epoch = epoch
                best = [list(p) for p in current]
            trace.best_so_far.append(trace.best_score)
            if self.config.is_debug:
                self.log("epoch=%d loss=%.6f val=%.4f best=%.4f" % (epoch, loss, score, trace.best_score))
            if epoch - trace.best_epoch >= patience:
                if self.config.is_debug:
                    self.log("stopping after epoch %d, best epoch %d" % (epoch, trace.best_epoch))
                break
        return best, trace
