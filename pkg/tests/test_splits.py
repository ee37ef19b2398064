import numpy as np
import pytest

from decaf.errors import DecafError
from decaf.splits import SplitMasks, class_groups, soft_label_leaveout, random_split


def _balanced(num_classes=6, per_class=100):
    return np.repeat(np.arange(num_classes), per_class)


def test_class_groups_are_contiguous():
    groups = class_groups(6, 3)
    assert [g.tolist() for g in groups] == [[0, 1], [2, 3], [4, 5]]
    with pytest.raises(DecafError):
        class_groups(2, 3)


def test_label_leaveout_shares():
    labels = _balanced()
    masks = soft_label_leaveout(labels, num_groups=3, major_share=0.8, seed=1)
    counts = masks.class_counts(labels, 6)
    expected = np.array([
        [80, 80, 10, 10, 10, 10],
        [10, 10, 80, 80, 10, 10],
        [10, 10, 10, 10, 80, 80],
    ])
    assert np.all(np.abs(counts - expected) <= 1)


def test_label_leaveout_covers_all_nodes_once():
    labels = _balanced(4, 37)
    masks = soft_label_leaveout(labels, seed=2)
    total = masks.train.astype(int) + masks.val.astype(int) + masks.test.astype(int)
    np.testing.assert_array_equal(total, np.ones(len(labels), dtype=int))


def test_label_leaveout_is_deterministic():
    labels = _balanced()
    a = soft_label_leaveout(labels, seed=5)
    b = soft_label_leaveout(labels, seed=5)
    np.testing.assert_array_equal(a.train, b.train)
    np.testing.assert_array_equal(a.test, b.test)
    c = soft_label_leaveout(labels, seed=6)
    assert not np.array_equal(a.train, c.train)


def test_label_leaveout_shifts_class_distribution():
    labels = _balanced()
    masks = soft_label_leaveout(labels, seed=1)
    assert masks.chi_square(labels, 6) > 0
    shuffled = random_split(len(labels), seed=1)
    assert masks.chi_square(labels, 6) > shuffled.chi_square(labels, 6)


def test_extra_groups_go_to_test():
    labels = _balanced(8, 50)
    masks = soft_label_leaveout(labels, num_groups=4, major_share=0.7, seed=1)
    counts = masks.class_counts(labels, 8)
    # groups 2 and 3 both dominate the test split
    assert counts[2, 4] > counts[0, 4]
    assert counts[2, 6] > counts[1, 6]


def test_missing_last_class_rejected():
    labels = _balanced(6, 20)
    labels = labels[labels < 5]
    with pytest.raises(DecafError):
        soft_label_leaveout(labels, num_classes=6)
    with pytest.raises(DecafError):
        soft_label_leaveout(_balanced(3, 20), num_classes=2)
    masks = soft_label_leaveout(labels, num_classes=5)
    assert masks.class_counts(labels, 5).sum() == len(labels)


def test_small_class_rejected():
    labels = np.array([0, 0, 0, 1, 1, 1, 2, 2])
    with pytest.raises(DecafError):
        soft_label_leaveout(labels)


@pytest.mark.parametrize("share", [0.2, 1.0])
def test_invalid_major_share(share):
    with pytest.raises(DecafError):
        soft_label_leaveout(_balanced(), major_share=share)


def test_random_split_sizes():
    masks = random_split(100, seed=3)
    assert masks.train.sum() == 60
    assert masks.val.sum() == 20
    assert masks.test.sum() == 20
    masks.check()


def test_overlapping_masks_rejected():
    m = np.array([True, False])
    with pytest.raises(DecafError):
        SplitMasks(train=m, val=m, test=~m).check()
