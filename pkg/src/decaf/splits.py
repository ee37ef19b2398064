"""
Node splits, in particular the soft label-leaveout protocol where each split
is dominated by a different group of classes.
"""
from dataclasses import dataclass
from typing import Sequence, List, Optional

import numpy as np

from decaf.errors import DecafError
from decaf.numerics import check_labels


@dataclass
class SplitMasks:
    """
    Disjoint boolean node masks.
    """
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def check(self):
        if (self.train.shape != self.val.shape) or (self.train.shape != self.test.shape):
            raise DecafError("Masks differ in length")
        if np.any(self.train & self.val) or np.any(self.train & self.test) or np.any(self.val & self.test):
            raise DecafError("Masks are not disjoint")

    def class_counts(self, labels: Sequence[int], num_classes: int) -> np.ndarray:
        """
        Returns the 3 x classes histogram (train, val, test).
        """
        labels = np.asarray(labels)
        return np.stack([np.bincount(labels[m], minlength=num_classes) for m in (self.train, self.val, self.test)])

    def chi_square(self, labels: Sequence[int], num_classes: int) -> float:
        """
        Pearson chi-square statistic of the split x class contingency table
        (classes absent everywhere are skipped).
        """
        table = self.class_counts(labels, num_classes).astype(np.float64)
        table = table[:, table.sum(axis=0) > 0]
        table = table[table.sum(axis=1) > 0]
        expected = np.outer(table.sum(axis=1), table.sum(axis=0)) / table.sum()
        return float(np.sum((table - expected) ** 2 / expected))


def class_groups(num_classes: int, num_groups: int) -> List[np.ndarray]:
    """
    Splits the classes in label order into contiguous groups.
    """
    if num_groups > num_classes:
        raise DecafError("Cannot split %d classes into %d groups" % (num_classes, num_groups))
    return np.array_split(np.arange(num_classes), num_groups)


def soft_label_leaveout(labels: Sequence[int], num_groups: int = 3, major_share: float = 0.8, seed: int = 1,
                        num_classes: Optional[int] = None) -> SplitMasks:
    """
    Split s receives major_share of the nodes of class group s and
    (1 - major_share) / (num_groups - 1) of every other group. Train, val
    and test are the splits of groups 0, 1 and 2; further groups go to test.
    Per class, floor-rounded counts go to the minority splits, the remainder to
    the majority split.

    :param labels: the node labels
    :param num_groups: the number of class groups (at least 3)
    :type num_groups: int
    :param major_share: the share of the group that dominates a split
    :type major_share: float
    :param seed: the seed for the within-class shuffles
    :type seed: int
    :param num_classes: the number of classes, every class needs nodes; None for max label + 1
    :type num_classes: int
    :return: the masks
    :rtype: SplitMasks
    """
    labels = np.asarray(labels, dtype=np.int64)
    if num_groups < 3:
        raise DecafError("Need at least 3 groups for train/val/test, got: %d" % num_groups)
    if not (1.0 / num_groups < major_share < 1.0):
        raise DecafError("major_share must lie in (1/%d, 1), got: %f" % (num_groups, major_share))
    if num_classes is None:
        num_classes = int(labels.max()) + 1
    check_labels(labels, num_classes)
    minor_share = (1.0 - major_share) / (num_groups - 1)
    assignment = np.full(len(labels), -1, dtype=np.int64)
    rng = np.random.default_rng(seed)
    for group, classes in enumerate(class_groups(num_classes, num_groups)):
        for c in classes:
            members = np.flatnonzero(labels == c)
            if len(members) < num_groups:
                raise DecafError("Class %d has %d nodes, needs at least %d" % (c, len(members), num_groups))
            members = members[rng.permutation(len(members))]
            minor = int(np.floor(len(members) * minor_share + 1e-9))
            start = 0
            for split in range(num_groups):
                if split == group:
                    continue
                assignment[members[start:start + minor]] = split
                start += minor
            assignment[members[start:]] = group
    result = SplitMasks(train=assignment == 0, val=assignment == 1, test=assignment >= 2)
    result.check()
    return result


def random_split(n: int, train_share: float = 0.6, val_share: float = 0.2, seed: int = 1) -> SplitMasks:
    """
    Uniformly random train/val/test masks; the remainder after train and val goes to test.
    """
    if (train_share <= 0) or (val_share < 0) or (train_share + val_share > 1.0):
        raise DecafError("Invalid shares: train=%f, val=%f" % (train_share, val_share))
    order = np.random.default_rng(seed).permutation(n)
    n_train = int(np.floor(n * train_share))
    n_val = int(np.floor(n * val_share))
    assignment = np.full(n, 2)
    assignment[order[:n_train]] = 0
    assignment[order[n_train:n_train + n_val]] = 1
    return SplitMasks(train=assignment == 0, val=assignment == 1, test=assignment == 2)
