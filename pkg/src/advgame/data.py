"""Synthetic data, CSV ingestion and the evaluation-sample selection protocol."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.stats import truncnorm

from .defenses import Defense, correct_counts
from .errors import ConfigurationError
from .nnet import Dataset


def class_means(classes: int, input_dim: int, base: float = 0.3, offset: float = 0.4) -> np.ndarray:
    """Class ``c`` sits at ``base`` everywhere plus ``offset`` along one coordinate direction.

    The directions are spread ``d // classes`` coordinates apart, so local
    smoothing of an input does not leak one class's bump onto another's.
    When there are more classes than coordinates, later classes wrap around
    with a negative offset so every mean stays distinct.
    """
    stride = max(1, input_dim // classes)
    means = np.full((classes, input_dim), base)
    for c in range(classes):
        sign = 1.0 if (c // input_dim) % 2 == 0 else -1.0
        means[c, (c % input_dim) * stride % input_dim] += sign * offset * (1 + c // (2 * input_dim))
    return np.clip(means, 0.0, 1.0)


def make_gaussian_blobs(classes: int, input_dim: int, per_class: int, spread: float, seed: int,
                        offset: float = 0.4, base: float = 0.3, truncation: float = 2.5) -> Dataset:
    """``per_class`` points per class around :func:`class_means` with truncated-normal noise, clipped to [0, 1]."""
    if classes < 1 or input_dim < 1 or per_class < 1 or spread < 0:
        raise ValueError("blob parameters must be positive")
    rng = np.random.default_rng(seed)
    means = class_means(classes, input_dim, base, offset)
    labels = np.repeat(np.arange(classes), per_class)
    if spread > 0:
        noise = truncnorm.rvs(-truncation, truncation, size=(len(labels), input_dim), random_state=rng) * spread
    else:
        noise = np.zeros((len(labels), input_dim))
    inputs = np.clip(means[labels] + noise, 0.0, 1.0)
    order = rng.permutation(len(labels))
    return Dataset(inputs[order], labels[order], classes)


def load_csv_dataset(path, num_classes: int | None = None, label_column: int = -1) -> Dataset:
    """Numeric CSV, one sample per row, label in ``label_column``; features min-max scaled to [0, 1]."""
    rows = []
    with open(path, newline="") as fh:
        for rec in csv.reader(fh):
            if not rec:
                continue
            try:
                rows.append([float(v) for v in rec])
            except ValueError:
                if rows:
                    raise ConfigurationError(f"{path}: non-numeric row {rec}") from None
                continue  # header
    if not rows:
        raise ConfigurationError(f"{path}: no data rows")
    arr = np.array(rows)
    labels = arr[:, label_column].astype(np.int64)
    feats = np.delete(arr, label_column % arr.shape[1], axis=1)
    lo, hi = feats.min(axis=0), feats.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    feats = (feats - lo) / span
    return Dataset(feats, labels, num_classes or int(labels.max()) + 1)


def balanced_take(labels: np.ndarray, candidates: np.ndarray, per_class: int, num_classes: int) -> np.ndarray:
    """First ``per_class`` candidate indices of each class, in candidate order."""
    chosen = []
    for c in range(num_classes):
        pool = candidates[labels[candidates] == c]
        chosen.append(pool[:per_class])
    return np.sort(np.concatenate(chosen))


def select_eval_samples(defenses: Sequence[Defense], data: Dataset, count: int, trials: int,
                        rng: np.random.Generator, min_rate: float = 0.98,
                        exclude: np.ndarray | None = None) -> np.ndarray:
    """Indices of a class-balanced subset that every defense classifies correctly.

    Stochastic defenses must be right on at least ``min_rate * trials`` of
    ``trials`` draws.  Candidates are taken in a seeded random order.
    """
    k = data.num_classes
    if count % k:
        raise ValueError(f"count {count} is not divisible by {k} classes")
    ok = np.ones(len(data), dtype=bool)
    if exclude is not None:
        ok[np.asarray(exclude, dtype=np.int64)] = False
    for d in defenses:
        hits = correct_counts(d, data, trials if d.is_randomized else 1, rng)
        need = min_rate * (trials if d.is_randomized else 1)
        ok &= hits >= need
    per_class = count // k
    available = np.bincount(data.labels[ok], minlength=k)
    if available.min() < per_class:
        worst = int(np.argmin(available))
        raise ConfigurationError(
            f"only {available[worst]} qualifying samples for class {worst}, need {per_class} per class")
    order = rng.permutation(len(data))
    candidates = order[ok[order]]
    return balanced_take(data.labels, candidates, per_class, k)


def balanced_split(labels: np.ndarray, index: np.ndarray, first: int, num_classes: int) -> tuple:
    """Split ``index`` into a class-balanced head of size ``first`` and the rest (also balanced)."""
    if first % num_classes:
        raise ValueError("split size must be divisible by the number of classes")
    head = balanced_take(labels, index, first // num_classes, num_classes)
    tail = np.setdiff1d(index, head)
    return head, tail


def write_csv_dataset(path, data: Dataset):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{i}" for i in range(data.input_dim)] + ["label"])
        for x, y in zip(data.inputs, data.labels):
            w.writerow([repr(float(v)) for v in x] + [int(y)])
