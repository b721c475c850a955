import numpy as np
import pytest

from advgame.data import (balanced_split, class_means, load_csv_dataset, make_gaussian_blobs, select_eval_samples,
                          write_csv_dataset)
from advgame.defenses import Defense, predict
from advgame.errors import ConfigurationError


def test_blob_counts_and_box():
    d = make_gaussian_blobs(3, 4, 100, 0.1, seed=0)
    assert len(d) == 300 and list(d.class_counts()) == [100, 100, 100]
    assert d.inputs.min() >= 0 and d.inputs.max() <= 1


def test_zero_spread_gives_class_means():
    d = make_gaussian_blobs(3, 4, 5, 0.0, seed=0)
    assert np.array_equal(d.inputs, class_means(3, 4)[d.labels])


def test_blobs_deterministic():
    a, b = make_gaussian_blobs(2, 3, 10, 0.1, seed=5), make_gaussian_blobs(2, 3, 10, 0.1, seed=5)
    assert np.array_equal(a.inputs, b.inputs) and np.array_equal(a.labels, b.labels)


def test_class_means_distinct_when_classes_exceed_dims():
    m = class_means(7, 3)
    assert len({tuple(r) for r in m}) == 7


def test_csv_round_trip(tmp_path, blobs):
    write_csv_dataset(tmp_path / "d.csv", blobs)
    back = load_csv_dataset(tmp_path / "d.csv", 3)
    assert np.array_equal(back.labels, blobs.labels)
    # features are min-max rescaled per column
    lo, hi = blobs.inputs.min(0), blobs.inputs.max(0)
    assert np.allclose(back.inputs, (blobs.inputs - lo) / (hi - lo))


def test_csv_errors(tmp_path):
    (tmp_path / "e.csv").write_text("a,b\n")
    with pytest.raises(ConfigurationError):
        load_csv_dataset(tmp_path / "e.csv")


def test_selection_is_balanced_and_correct(defenses, blobs):
    defs = list(defenses.values())
    idx = select_eval_samples(defs, blobs, 30, 5, np.random.default_rng(0), min_rate=0.6)
    assert np.bincount(blobs.labels[idx], minlength=3).tolist() == [10, 10, 10]
    X, y = blobs.inputs[idx], blobs.labels[idx]
    for d in defs:
        if not d.is_randomized:
            assert np.all(predict(d, X) == y)


def test_selection_shortfall_names_class(defenses, blobs):
    with pytest.raises(ConfigurationError, match="class"):
        select_eval_samples(list(defenses.values()), blobs, 180, 2, np.random.default_rng(0))


def test_selection_respects_exclusion(defenses, blobs):
    defs = [defenses["plain"]]
    first = select_eval_samples(defs, blobs, 30, 1, np.random.default_rng(0))
    second = select_eval_samples(defs, blobs, 30, 1, np.random.default_rng(1), exclude=first)
    assert not set(first) & set(second)


def test_balanced_split_disjoint(blobs):
    idx = np.arange(60)
    idx = idx[np.isin(blobs.labels[idx], [0, 1, 2])]
    counts = np.bincount(blobs.labels[idx], minlength=3)
    per = counts.min() // 2
    head, tail = balanced_split(blobs.labels, idx, per * 3, 3)
    assert not set(head) & set(tail)
    assert np.bincount(blobs.labels[head], minlength=3).tolist() == [per] * 3
