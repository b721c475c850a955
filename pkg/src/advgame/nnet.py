"""Tiny numpy classifiers with exact analytic gradients.

Two architectures are supported: ``linear`` (a single softmax layer) and
``mlp1`` (one ReLU hidden layer).  Everything is float64 and every routine that
consumes randomness takes an explicit seed or generator.

Functions accept a single input vector ``x`` of shape ``(d,)`` or a batch of
shape ``(m, d)``; per-sample quantities come back with the matching leading
shape.
"""
from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import NumericalFailure
from .rng import substream

log = logging.getLogger(__name__)

ARCHITECTURES = ("linear", "mlp1")


@dataclass
class Dataset:
    inputs: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.inputs.ndim != 2:
            raise ValueError("inputs must be a samples x features matrix")
        if len(self.labels) != len(self.inputs):
            raise ValueError("inputs and labels differ in length")
        if self.inputs.size and (self.inputs.min() < 0.0 or self.inputs.max() > 1.0):
            raise ValueError("input coordinates must lie in [0, 1]")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ValueError("labels must lie in [0, num_classes)")

    def __len__(self):
        return len(self.labels)

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]

    def subset(self, index) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        return Dataset(self.inputs[index], self.labels[index], self.num_classes)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)


@dataclass
class Model:
    arch: str
    input_dim: int
    num_classes: int
    weights: list  # per layer, shape (fan_in, fan_out)
    biases: list
    hidden_dim: Optional[int] = None
    activation: str = "relu"
    seed: Optional[int] = None
    provenance: dict = field(default_factory=dict)

    def copy(self) -> "Model":
        return copy.deepcopy(self)

    def parameters(self) -> list:
        out = []
        for w, b in zip(self.weights, self.biases):
            out.extend([w, b])
        return out

    @property
    def n_params(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(p)) for p in self.parameters())


@dataclass
class TrainConfig:
    learning_rate: float = 0.1
    epochs: int = 30
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0 or self.epochs < 0 or self.batch_size < 1 or self.seed < 0:
            raise ValueError(f"invalid training config {self}")


@dataclass
class FatConfig:
    """PGD-K-tau settings; ``tau`` is the number of extra steps allowed once misclassified."""

    K: int = 7
    tau: int = 1
    epsilon: float = 0.05
    step_size: float = 0.0125
    random_start: bool = True

    def __post_init__(self):
        if self.K < 0 or self.tau < 0 or self.tau > self.K:
            raise ValueError("FAT config needs 0 <= tau <= K")
        if self.epsilon < 0 or self.step_size < 0 or self.step_size > self.epsilon:
            raise ValueError("FAT config needs 0 <= step_size <= epsilon")


def init_model(arch: str, input_dim: int, num_classes: int, hidden_dim: Optional[int] = None,
               seed: int = 0) -> Model:
    """Uniform(+-sqrt(1/fan_in)) weights, zero biases."""
    if arch not in ARCHITECTURES:
        raise ValueError(f"unknown architecture {arch!r}")
    if input_dim < 1 or num_classes < 1:
        raise ValueError("dimensions must be positive")
    if arch == "mlp1":
        if hidden_dim is None or hidden_dim < 1:
            raise ValueError("mlp1 needs a positive hidden_dim")
        shapes = [(input_dim, hidden_dim), (hidden_dim, num_classes)]
    else:
        hidden_dim = None
        shapes = [(input_dim, num_classes)]
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in shapes:
        bound = np.sqrt(1.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Model(arch, input_dim, num_classes, weights, biases, hidden_dim=hidden_dim, seed=seed)


def _check_inputs(model: Model, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != model.input_dim:
        raise ValueError(f"expected inputs of dimension {model.input_dim}, got shape {x.shape}")
    return X, single


def _forward_cache(model: Model, X: np.ndarray):
    if model.arch == "linear":
        return X @ model.weights[0] + model.biases[0], None
    pre = X @ model.weights[0] + model.biases[0]
    hidden = np.maximum(pre, 0.0)
    return hidden @ model.weights[1] + model.biases[1], (pre, hidden)


def forward(model: Model, x) -> np.ndarray:
    X, single = _check_inputs(model, x)
    logits, _ = _forward_cache(model, X)
    return logits[0] if single else logits


def predict(model: Model, x) -> np.ndarray:
    return np.argmax(forward(model, x), axis=-1)


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(logits, y) -> np.ndarray:
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    shifted = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(shifted).sum(axis=1))
    return logsum - shifted[np.arange(len(y)), y]


def _check_labels(model: Model, y, m: int) -> np.ndarray:
    y = np.atleast_1d(np.asarray(y, dtype=np.int64))
    if y.shape != (m,):
        raise ValueError("one label per input is required")
    if y.min() < 0 or y.max() >= model.num_classes:
        raise ValueError("label out of range")
    return y


def _backward(model: Model, X, y, cache, logits, need_params: bool):
    """Per-sample dL/dlogits, input gradients, and (summed) parameter gradients."""
    m = len(y)
    dz = softmax(logits)
    dz[np.arange(m), y] -= 1.0
    if model.arch == "linear":
        dx = dz @ model.weights[0].T
        grads = [X.T @ dz, dz.sum(axis=0)] if need_params else None
        return dx, grads
    pre, hidden = cache
    dh = dz @ model.weights[1].T
    dpre = dh * (pre > 0.0)  # relu'(0) := 0
    dx = dpre @ model.weights[0].T
    grads = None
    if need_params:
        grads = [X.T @ dpre, dpre.sum(axis=0), hidden.T @ dz, dz.sum(axis=0)]
    return dx, grads


def loss_and_input_gradient(model: Model, x, y):
    """Softmax cross-entropy and its exact gradient with respect to the input.

    For a batch, returns per-sample losses ``(m,)`` and gradients ``(m, d)``.
    """
    X, single = _check_inputs(model, x)
    y = _check_labels(model, y, len(X))
    logits, cache = _forward_cache(model, X)
    loss = cross_entropy(logits, y)
    dx, _ = _backward(model, X, y, cache, logits, need_params=False)
    if single:
        return float(loss[0]), dx[0]
    return loss, dx


def loss_and_param_gradients(model: Model, x, y):
    """Mean cross-entropy over the batch and its gradients, ordered like ``Model.parameters()``."""
    X, _ = _check_inputs(model, x)
    y = _check_labels(model, y, len(X))
    logits, cache = _forward_cache(model, X)
    loss = cross_entropy(logits, y)
    _, grads = _backward(model, X, y, cache, logits, need_params=True)
    m = len(y)
    return float(loss.mean()), [g / m for g in grads]


def accuracy(model: Model, data: Dataset) -> float:
    if len(data) == 0:
        return float("nan")
    return float(np.mean(predict(model, data.inputs) == data.labels))


def _sgd(model: Model, data: Dataset, cfg: TrainConfig,
         batch_hook: Optional[Callable[[Model, np.ndarray, np.ndarray, int], np.ndarray]]) -> Model:
    if len(data) == 0:
        raise ValueError("cannot train on an empty dataset")
    if data.input_dim != model.input_dim:
        raise ValueError("dataset and model input dimensions differ")
    model = model.copy()
    rng = np.random.default_rng(cfg.seed)
    step = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(len(data))
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            X, y = data.inputs[idx], data.labels[idx]
            if batch_hook is not None:
                X = batch_hook(model, X, y, step)
            _, grads = loss_and_param_gradients(model, X, y)
            for p, g in zip(model.parameters(), grads):
                p -= cfg.learning_rate * g
            step += 1
        if not model.is_finite():
            raise NumericalFailure("training diverged: non-finite parameters")
    return model


def train_sgd(model: Model, data: Dataset, cfg: TrainConfig,
              augment: Optional[Callable[[np.ndarray, np.random.Generator], np.ndarray]] = None) -> Model:
    """Minibatch SGD on mean cross-entropy; returns a trained copy.

    ``augment`` optionally rewrites each minibatch before the gradient step
    (used to train models that will sit behind random input transforms).
    """
    hook = None
    if augment is not None:
        aug_rng = substream(cfg.seed, "augment")

        def hook(_model, X, _y, _step):
            return augment(X, aug_rng)

    trained = _sgd(model, data, cfg, hook)
    log.info("trained %s model: train accuracy %.4f", trained.arch, accuracy(trained, data))
    return trained


def project_linf(original, candidate, epsilon: float) -> np.ndarray:
    """Clamp ``candidate`` into the l-inf ball of radius ``epsilon`` around ``original`` and the unit box."""
    original = np.asarray(original, dtype=np.float64)
    lo = np.maximum(original - epsilon, 0.0)
    hi = np.minimum(original + epsilon, 1.0)
    return np.minimum(np.maximum(candidate, lo), hi)


def pgd_k_tau(model: Model, x, y, cfg: FatConfig, rng: np.random.Generator) -> np.ndarray:
    """PGD that stops early on samples that are already misclassified.

    A sample is allowed ``tau`` further steps after it is first seen
    misclassified; with ``tau == 0`` it stops as soon as that happens, with
    ``tau == K`` this is plain K-step PGD.
    """
    X, single = _check_inputs(model, x)
    y = _check_labels(model, y, len(X))
    adv = X.copy()
    if cfg.random_start:
        adv = project_linf(X, X + rng.uniform(-cfg.epsilon, cfg.epsilon, size=X.shape), cfg.epsilon)
    slack = np.full(len(X), cfg.tau)
    active = np.ones(len(X), dtype=bool)
    for _ in range(cfg.K):
        wrong = predict(model, adv) != y
        stop = wrong & (slack == 0)
        active &= ~stop
        slack = np.where(wrong & active, slack - 1, slack)
        if not active.any():
            break
        idx = np.flatnonzero(active)
        _, g = loss_and_input_gradient(model, adv[idx], y[idx])
        adv[idx] = project_linf(X[idx], adv[idx] + cfg.step_size * np.sign(g), cfg.epsilon)
    return adv[0] if single else adv


def train_fat(model: Model, data: Dataset, train: TrainConfig, fat: FatConfig) -> Model:
    """Friendly adversarial training: every minibatch is swapped for its PGD-K-tau version."""
    attack_rng = substream(train.seed, "pgd-k-tau")

    def hook(current, X, y, _step):
        return pgd_k_tau(current, X, y, fat, attack_rng)

    trained = _sgd(model, data, train, hook)
    log.info("FAT model: clean train accuracy %.4f", accuracy(trained, data))
    return trained


def model_to_dict(model: Model) -> dict:
    return {
        "arch": model.arch,
        "input_dim": model.input_dim,
        "num_classes": model.num_classes,
        "hidden_dim": model.hidden_dim,
        "activation": model.activation,
        "seed": model.seed,
        "provenance": model.provenance,
        "layers": [
            {"shape": list(w.shape), "weights": w.ravel().tolist(), "bias": b.tolist()}
            for w, b in zip(model.weights, model.biases)
        ],
    }


def model_from_dict(doc: dict) -> Model:
    weights = [np.array(layer["weights"], dtype=np.float64).reshape(layer["shape"]) for layer in doc["layers"]]
    biases = [np.array(layer["bias"], dtype=np.float64) for layer in doc["layers"]]
    return Model(doc["arch"], doc["input_dim"], doc["num_classes"], weights, biases,
                 hidden_dim=doc.get("hidden_dim"), activation=doc.get("activation", "relu"),
                 seed=doc.get("seed"), provenance=doc.get("provenance", {}))
