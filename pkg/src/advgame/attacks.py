"""Untargeted l-inf gradient attacks against :class:`~advgame.defenses.Defense` objects.

All attacks take a batch ``x`` of shape ``(m, d)`` (or a single vector), true
labels ``y`` and a generator, and return perturbed inputs inside the
epsilon-ball around ``x`` intersected with the unit box.  Given the same
generator state they are deterministic.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .defenses import Defense, defense_loss_gradient, predict_logits
from .errors import ConfigurationError
from .nnet import project_linf, softmax

ALGORITHMS = ("FGSM", "PGD", "MIM", "APGD", "MIME", "AESAGA")


@dataclass(frozen=True)
class AttackParams:
    epsilon: float = 0.031
    step_size: float = 0.0031
    steps: int = 10
    momentum_decay: float = 0.5
    mc_samples: int = 1
    fitting_factor: float = 50.0
    alpha_learning_rate: float = 10000.0
    random_start: bool = False

    def __post_init__(self):
        if self.epsilon < 0 or self.step_size < 0 or self.step_size > self.epsilon:
            raise ConfigurationError("attack params need 0 <= step_size <= epsilon")
        if self.steps < 0 or self.mc_samples < 1 or not 0.0 <= self.momentum_decay <= 1.0:
            raise ConfigurationError(f"invalid attack params {self}")
        if self.fitting_factor <= 0 or self.alpha_learning_rate < 0:
            raise ConfigurationError("fitting factor must be positive, alpha rate non-negative")

    def to_dict(self) -> dict:
        return asdict(self)


# Attack settings used throughout the experiments (l-inf, eps = 0.031).
DEFAULT_PARAMS = {
    "FGSM": AttackParams(step_size=0.031, steps=1),
    "PGD": AttackParams(step_size=0.0031, steps=10),
    "MIM": AttackParams(step_size=0.0031, steps=10, momentum_decay=0.5),
    "APGD": AttackParams(step_size=0.005, steps=20),
    "MIME": AttackParams(step_size=0.0031, steps=10, momentum_decay=0.5, mc_samples=10),
    "AESAGA": AttackParams(step_size=0.005, steps=40, momentum_decay=0.5, mc_samples=4,
                           fitting_factor=50.0, alpha_learning_rate=10000.0),
}


@dataclass(frozen=True)
class AttackSpec:
    algorithm: str
    targets: tuple
    params: AttackParams

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(self.targets))
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(f"unknown attack {self.algorithm!r}")
        if self.algorithm == "AESAGA":
            if len(self.targets) < 2:
                raise ConfigurationError("AE-SAGA needs at least two target defenses")
        elif len(self.targets) != 1:
            raise ConfigurationError(f"{self.algorithm} targets exactly one defense")

    @property
    def id(self) -> str:
        return f"{self.algorithm}({','.join(self.targets)})"

    def to_dict(self) -> dict:
        return {"id": self.id, "algorithm": self.algorithm, "targets": list(self.targets),
                "params": self.params.to_dict()}

    @classmethod
    def from_dict(cls, doc: dict) -> "AttackSpec":
        return cls(doc["algorithm"], tuple(doc["targets"]), AttackParams(**doc["params"]))


def _batch(x, y):
    x = np.asarray(x, dtype=np.float64)
    return np.atleast_2d(x), np.atleast_1d(np.asarray(y, dtype=np.int64)), x.ndim == 1


def _unbatch(adv, single):
    return adv[0] if single else adv


def _gradient(defense: Defense, X, y, n_mc: int, rng):
    return defense_loss_gradient(defense, X, y, n_mc=n_mc, rng=rng)


def _l1_normalize(g: np.ndarray) -> np.ndarray:
    norm = np.abs(g).sum(axis=1, keepdims=True)
    return np.divide(g, norm, out=np.zeros_like(g), where=norm > 0)


def _start(X, params: AttackParams, rng):
    if params.random_start and params.epsilon > 0:
        return project_linf(X, X + rng.uniform(-params.epsilon, params.epsilon, size=X.shape), params.epsilon)
    return X.copy()


def fgsm(defense: Defense, x, y, params: AttackParams, rng=None):
    X, y, single = _batch(x, y)
    _, g = _gradient(defense, X, y, 1, rng)
    return _unbatch(project_linf(X, X + params.epsilon * np.sign(g), params.epsilon), single)


def pgd(defense: Defense, x, y, params: AttackParams, rng=None):
    X, y, single = _batch(x, y)
    adv = _start(X, params, rng)
    for _ in range(params.steps):
        _, g = _gradient(defense, adv, y, 1, rng)
        adv = project_linf(X, adv + params.step_size * np.sign(g), params.epsilon)
    return _unbatch(adv, single)


def _momentum_attack(defense, X, y, params, rng, n_mc):
    adv = X.copy()
    g = np.zeros_like(X)
    for _ in range(params.steps):
        _, grad = _gradient(defense, adv, y, n_mc, rng)
        g = params.momentum_decay * g + _l1_normalize(grad)
        adv = project_linf(X, adv + params.step_size * np.sign(g), params.epsilon)
    return adv


def mim(defense: Defense, x, y, params: AttackParams, rng=None):
    """Momentum iterative method; on a randomized defense each step sees one draw."""
    X, y, single = _batch(x, y)
    return _unbatch(_momentum_attack(defense, X, y, params, rng, 1), single)


def mime(defense: Defense, x, y, params: AttackParams, rng=None):
    """Momentum iterative method whose per-step gradient averages ``mc_samples`` defense draws."""
    if not defense.is_randomized:
        raise ValueError(f"MIME targets randomized defenses; {defense.id} is deterministic (use mim)")
    X, y, single = _batch(x, y)
    return _unbatch(_momentum_attack(defense, X, y, params, rng, params.mc_samples), single)


def apgd_checkpoints(steps: int) -> list:
    """Iterations at which the step size may be halved.

    The first checkpoint sits at ceil(0.22 * steps); after that the gaps
    shrink by 0.03 * steps per checkpoint down to a floor of 0.06 * steps.
    """
    if steps <= 0:
        return []
    fractions = [0.0, 0.22]
    while fractions[-1] < 1.0:
        fractions.append(fractions[-1] + max(fractions[-1] - fractions[-2] - 0.03, 0.06))
    points = sorted({math.ceil(round(p * steps, 9)) for p in fractions[1:]} - {0})
    return [p for p in points if p < steps]


def apgd_lite(defense: Defense, x, y, params: AttackParams, rng=None, return_trace: bool = False):
    """Simplified APGD: momentum PGD with checkpointed step halving and best-loss tracking.

    At each checkpoint, a sample whose best loss improved on fewer than 75%
    of the iterations since the previous checkpoint has its step size halved
    and restarts from its best iterate.  The best-loss iterate is returned.
    """
    X, y, single = _batch(x, y)
    m = len(X)
    eta = np.full((m, 1), params.step_size)
    alpha = 0.75
    cur = _start(X, params, rng)
    loss, grad = _gradient(defense, cur, y, params.mc_samples, rng)
    best, best_loss, best_grad = cur.copy(), np.array(loss, dtype=np.float64), grad.copy()
    prev = cur.copy()
    checkpoints = set(apgd_checkpoints(params.steps))
    last_checkpoint = 0
    improved = np.zeros(m, dtype=np.int64)
    halvings = np.zeros(m, dtype=np.int64)
    losses = [best_loss.copy()]
    for k in range(1, params.steps + 1):
        z = project_linf(X, cur + eta * np.sign(grad), params.epsilon)
        if k == 1:
            nxt = z
        else:
            nxt = project_linf(X, cur + alpha * (z - cur) + (1 - alpha) * (cur - prev), params.epsilon)
        prev, cur = cur, nxt
        loss, grad = _gradient(defense, cur, y, params.mc_samples, rng)
        losses.append(np.array(loss))
        up = loss > best_loss
        improved += up
        best[up] = cur[up]
        best_grad[up] = grad[up]
        best_loss = np.where(up, loss, best_loss)
        if k in checkpoints and k < params.steps:
            span = k - last_checkpoint
            stall = improved < 0.75 * span
            if stall.any():
                eta[stall] /= 2.0
                halvings += stall
                cur[stall] = best[stall]
                prev[stall] = best[stall]
                grad[stall] = best_grad[stall]
            improved[:] = 0
            last_checkpoint = k
    out = _unbatch(best, single)
    if return_trace:
        return out, {"losses": np.array(losses), "best_loss": best_loss, "halvings": halvings}
    return out


def _simplex_projection(v: np.ndarray) -> np.ndarray:
    """Euclidean projection of each row of ``v`` onto the probability simplex."""
    u = -np.sort(-v, axis=1)
    css = np.cumsum(u, axis=1) - 1.0
    k = np.arange(1, v.shape[1] + 1)
    cond = u - css / k > 0
    rho = cond.shape[1] - 1 - np.argmax(cond[:, ::-1], axis=1)
    theta = css[np.arange(len(v)), rho] / (rho + 1)
    return np.maximum(v - theta[:, None], 0.0)


def true_class_probability(defense: Defense, X, y, n_mc: int, rng) -> np.ndarray:
    """Mean softmax mass on the true class over ``n_mc`` defense draws."""
    draws = n_mc if defense.is_randomized else 1
    total = np.zeros(len(X))
    for _ in range(draws):
        total += softmax(predict_logits(defense, X, rng))[np.arange(len(X)), y]
    return total / draws


def ae_saga(defenses: Sequence[Defense], x, y, params: AttackParams, rng=None, return_alpha: bool = False):
    """Blended-gradient momentum attack against several defenses at once.

    Each iteration blends the l1-normalized gradient of every deterministic
    defense and the Monte-Carlo expected gradient of every randomized one,
    weighted by a per-sample vector alpha on the simplex (attention map fixed
    to all ones).  After each step alpha moves toward defenses that still
    classify the sample correctly: ``alpha <- proj(alpha + rate * p_true)``
    with ``rate = alpha_learning_rate * step_size / fitting_factor``.
    """
    if len(defenses) < 2:
        raise ValueError("AE-SAGA needs at least two defenses")
    X, y, single = _batch(x, y)
    m, k = len(X), len(defenses)
    alpha = np.full((m, k), 1.0 / k)
    rate = params.alpha_learning_rate * params.step_size / params.fitting_factor
    adv = X.copy()
    blend = np.zeros_like(X)
    history = [alpha.copy()]
    for _ in range(params.steps):
        step = np.zeros_like(X)
        for j, d in enumerate(defenses):
            n_mc = params.mc_samples if d.is_randomized else 1
            _, g = _gradient(d, adv, y, n_mc, rng)
            step += alpha[:, j:j + 1] * _l1_normalize(g)
        blend = params.momentum_decay * blend + step
        adv = project_linf(X, adv + params.step_size * np.sign(blend), params.epsilon)
        if rate > 0:
            p_true = np.column_stack([true_class_probability(d, adv, y, params.mc_samples, rng) for d in defenses])
            alpha = _simplex_projection(alpha + rate * p_true)
        history.append(alpha.copy())
    out = _unbatch(adv, single)
    if return_alpha:
        return out, np.array(history)
    return out


def run_attack(spec: AttackSpec, defenses: dict, x, y, rng: Optional[np.random.Generator] = None,
               params: Optional[AttackParams] = None):
    """Dispatch ``spec`` against the defenses it names."""
    params = params or spec.params
    try:
        targets = [defenses[t] for t in spec.targets]
    except KeyError as exc:
        raise ConfigurationError(f"attack {spec.id} names unknown defense {exc.args[0]!r}") from None
    algo = spec.algorithm
    if algo == "AESAGA":
        return ae_saga(targets, x, y, params, rng)
    fn = {"FGSM": fgsm, "PGD": pgd, "MIM": mim, "APGD": apgd_lite, "MIME": mime}[algo]
    return fn(targets[0], x, y, params, rng)


def with_overrides(params: AttackParams, **changes) -> AttackParams:
    return replace(params, **changes)


def linf_violations(originals, perturbed, epsilon: float, atol: float = 1e-12) -> int:
    """Number of samples outside the epsilon-ball or the unit box."""
    originals = np.atleast_2d(originals)
    perturbed = np.atleast_2d(perturbed)
    dist = np.abs(perturbed - originals).max(axis=1)
    box = (perturbed.min(axis=1) < 0.0) | (perturbed.max(axis=1) > 1.0)
    return int(np.sum((dist > epsilon + atol) | box))
