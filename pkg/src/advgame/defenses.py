"""Defenses: plain, friendly-adversarially trained, random-transform and two-model purification.

Every defense exposes the same two things the rest of the package needs:
stochastic logits (:func:`predict_logits`) and a loss-gradient oracle
(:func:`defense_loss_gradient`).  Inputs are single vectors or batches.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import nnet
from .errors import ConfigurationError
from .nnet import Dataset, Model, TrainConfig
from .transforms import TransformDistribution, apply, expected_loss_gradient, sample_pipeline

KINDS = ("Plain", "Fat", "BartLike", "TitLike")


@dataclass(frozen=True)
class PurifierParams:
    """Settings for the PGD run on the inner model of a two-model defense."""

    epsilon: float = 0.03
    step_size: float = 0.01
    steps: int = 5
    random_start: bool = True

    def to_dict(self) -> dict:
        return {"epsilon": self.epsilon, "step_size": self.step_size, "steps": self.steps,
                "random_start": self.random_start}


@dataclass
class Defense:
    id: str
    kind: str
    primary: Model
    inner: Optional[Model] = None
    transform_dist: Optional[TransformDistribution] = None
    purifier: Optional[PurifierParams] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"defense {self.id}: unknown kind {self.kind!r}")
        if self.kind == "BartLike" and self.transform_dist is None:
            raise ConfigurationError(f"defense {self.id}: BartLike needs a transform distribution")
        if self.kind == "TitLike" and (self.inner is None or self.purifier is None):
            raise ConfigurationError(f"defense {self.id}: TitLike needs an inner model and purifier params")

    @property
    def is_randomized(self) -> bool:
        if self.kind == "BartLike":
            return True
        if self.kind == "TitLike":
            return self.purifier.random_start and self.purifier.epsilon > 0
        return False

    @property
    def num_classes(self) -> int:
        return self.primary.num_classes


def purify(defense: Defense, x, rng: np.random.Generator) -> np.ndarray:
    """psi(x, C_b): label-free PGD on the inner model, using its own prediction as the label."""
    p = defense.purifier
    X = np.atleast_2d(np.asarray(x, dtype=np.float64))
    inner = defense.inner
    y_hat = nnet.predict(inner, X)
    adv = X.copy()
    if p.random_start and p.epsilon > 0:
        adv = nnet.project_linf(X, X + rng.uniform(-p.epsilon, p.epsilon, size=X.shape), p.epsilon)
    for _ in range(p.steps):
        _, g = nnet.loss_and_input_gradient(inner, adv, y_hat)
        adv = nnet.project_linf(X, adv + p.step_size * np.sign(g), p.epsilon)
    return adv[0] if np.ndim(x) == 1 else adv


def predict_logits(defense: Defense, x, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if defense.kind in ("Plain", "Fat"):
        return nnet.forward(defense.primary, x)
    if rng is None and defense.is_randomized:
        raise ValueError(f"defense {defense.id} is stochastic and needs a generator")
    if defense.kind == "BartLike":
        X = np.atleast_2d(x)
        pipe = sample_pipeline(defense.transform_dist, rng, X.shape[1], count=len(X))
        out = nnet.forward(defense.primary, apply(pipe, X))
        return out[0] if x.ndim == 1 else out
    return nnet.forward(defense.primary, purify(defense, x, rng))


def predict(defense: Defense, x, rng: Optional[np.random.Generator] = None) -> np.ndarray:
    return np.argmax(predict_logits(defense, x, rng), axis=-1)


def defense_loss_gradient(defense: Defense, x, y, n_mc: int = 1, rng: Optional[np.random.Generator] = None):
    """Loss estimate and input gradient of the defense's cross-entropy.

    Deterministic defenses return the exact gradient.  Random-transform
    defenses average pipeline pullbacks over ``n_mc`` draws.  Two-model
    defenses average the outer-model gradient at psi(x) over ``n_mc`` random
    starts, passing it straight through psi (sign steps treated as identity).
    """
    primary = defense.primary
    if defense.kind in ("Plain", "Fat"):
        return nnet.loss_and_input_gradient(primary, x, y)
    if n_mc < 1:
        raise ValueError("randomized defenses need n_mc >= 1")
    x = np.asarray(x, dtype=np.float64)
    X = np.atleast_2d(x)
    Y = np.atleast_1d(y)
    if defense.kind == "BartLike":
        loss, grad = expected_loss_gradient(
            defense.transform_dist, lambda tx: nnet.loss_and_input_gradient(primary, tx, Y),
            X, n_mc, rng, return_loss=True)
    else:
        draws = n_mc if defense.is_randomized else 1
        loss = np.zeros(len(X))
        grad = np.zeros_like(X)
        for _ in range(draws):
            l_j, g_j = nnet.loss_and_input_gradient(primary, purify(defense, X, rng), Y)
            loss += l_j
            grad += g_j
        loss /= draws
        grad /= draws
    if x.ndim == 1:
        return float(np.asarray(loss)[0]), grad[0]
    return loss, grad


def build_tit(defense_id: str, inner: Model, outer: Model, purifier: PurifierParams, data: Dataset,
              train: TrainConfig, rng: np.random.Generator) -> Defense:
    """Train the outer model on purified copies of ``data`` (labels kept) and wrap both models."""
    scratch = Defense(defense_id, "TitLike", outer, inner=inner, purifier=purifier)
    purified = Dataset(purify(scratch, data.inputs, rng), data.labels, data.num_classes)
    trained = nnet.train_sgd(outer, purified, train)
    return Defense(defense_id, "TitLike", trained, inner=inner, purifier=purifier)


def correct_counts(defense: Defense, data: Dataset, trials: int, rng: Optional[np.random.Generator]) -> np.ndarray:
    """Per sample, how many of ``trials`` stochastic evaluations were correct."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not defense.is_randomized:
        hit = (predict(defense, data.inputs, rng) == data.labels).astype(np.int64)
        return hit * trials
    counts = np.zeros(len(data), dtype=np.int64)
    for _ in range(trials):
        counts += predict(defense, data.inputs, rng) == data.labels
    return counts


def clean_accuracy(defense: Defense, data: Dataset, trials: int = 1,
                   rng: Optional[np.random.Generator] = None) -> float:
    """Fraction of samples whose majority outcome over ``trials`` evaluations is correct."""
    if len(data) == 0:
        return float("nan")
    counts = correct_counts(defense, data, trials, rng)
    return float(np.mean(2 * counts > trials))
