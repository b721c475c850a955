"""Strategy sets, ensemble voting and payoff-matrix estimation."""
from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .attacks import DEFAULT_PARAMS, AttackParams, AttackSpec
from .defenses import Defense, predict_logits
from .errors import ConfigurationError
from .nnet import softmax
from .rng import substream

VOTING_FUNCTIONS = ("hard", "soft")


@dataclass(frozen=True)
class DefenderStrategy:
    members: tuple
    voting: str = "hard"

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if not self.members:
            raise ConfigurationError("a defender strategy needs at least one member")
        if len(set(self.members)) != len(self.members):
            raise ConfigurationError(f"duplicate members in {self.members}")
        if self.voting not in VOTING_FUNCTIONS:
            raise ConfigurationError(f"unknown voting function {self.voting!r}")

    @property
    def id(self) -> str:
        if len(self.members) == 1:
            return self.members[0]
        return f"{self.voting}({'+'.join(self.members)})"

    def to_dict(self) -> dict:
        return {"id": self.id, "members": list(self.members), "voting": self.voting}


@dataclass
class AdversarialBatch:
    originals: np.ndarray
    perturbed: np.ndarray
    labels: np.ndarray
    attack_id: str
    epsilon: float = float("nan")
    provenance: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.labels)

    def head(self, n: int) -> "AdversarialBatch":
        return AdversarialBatch(self.originals[:n], self.perturbed[:n], self.labels[:n], self.attack_id,
                                self.epsilon, dict(self.provenance))

    def subset(self, index) -> "AdversarialBatch":
        return AdversarialBatch(self.originals[index], self.perturbed[index], self.labels[index],
                                self.attack_id, self.epsilon, dict(self.provenance))


@dataclass
class PayoffMatrix:
    strategy_ids: list
    attack_ids: list
    values: np.ndarray
    sample_count: int
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.shape != (len(self.strategy_ids), len(self.attack_ids)) or self.values.size == 0:
            raise ValueError("payoff matrix shape does not match its labels")
        if self.values.min() < 0.0 or self.values.max() > 1.0:
            raise ValueError("payoffs must lie in [0, 1]")


def _vote_counts(labels: np.ndarray, num_classes: int) -> np.ndarray:
    """labels: (members, m) -> counts (m, classes)."""
    counts = np.zeros((labels.shape[1], num_classes), dtype=np.int64)
    for row in labels:
        counts[np.arange(labels.shape[1]), row] += 1
    return counts


def vote_hard_batch(logits: np.ndarray, tie_break_softmax: bool = True) -> np.ndarray:
    """Majority vote over member argmaxes; ``logits`` has shape (members, m, classes).

    Ties go to the tied class with the highest mean softmax, then the lowest index.
    """
    logits = np.asarray(logits, dtype=np.float64)
    counts = _vote_counts(np.argmax(logits, axis=2), logits.shape[2])
    tied = counts == counts.max(axis=1, keepdims=True)
    if not tie_break_softmax:
        return np.argmax(tied, axis=1)
    mean_prob = softmax(logits).mean(axis=0)
    return np.argmax(np.where(tied, mean_prob, -np.inf), axis=1)


def vote_soft_batch(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    return np.argmax(softmax(logits).mean(axis=0), axis=1)


def vote_hard(logits_list: Sequence, tie_break_softmax: bool = True) -> int:
    stacked = np.asarray(logits_list, dtype=np.float64)
    if stacked.ndim != 2 or len(stacked) == 0:
        raise ValueError("need a nonempty list of equal-length logit vectors")
    return int(vote_hard_batch(stacked[:, None, :], tie_break_softmax)[0])


def vote_soft(logits_list: Sequence) -> int:
    stacked = np.asarray(logits_list, dtype=np.float64)
    if stacked.ndim != 2 or len(stacked) == 0:
        raise ValueError("need a nonempty list of equal-length logit vectors")
    return int(vote_soft_batch(stacked[:, None, :])[0])


def enumerate_defender_strategies(defense_ids: Sequence[str], n: int,
                                  voting_functions: Sequence[str] = VOTING_FUNCTIONS) -> list:
    """Every nonempty subset of at most ``n`` defenses crossed with the voting functions.

    Singletons appear once (canonical voting ``hard``): a one-member vote is its argmax.
    """
    if n < 1 or n > len(defense_ids):
        raise ValueError("need 1 <= n <= number of defenses")
    if not voting_functions:
        raise ValueError("need at least one voting function")
    out = [DefenderStrategy((d,), "hard") for d in defense_ids]
    for size in range(2, n + 1):
        for members in itertools.combinations(defense_ids, size):
            out.extend(DefenderStrategy(members, v) for v in voting_functions)
    return out


def expected_strategy_count(num_defenses: int, n: int, num_voting: int) -> int:
    from math import comb
    return num_defenses + num_voting * sum(comb(num_defenses, k) for k in range(2, n + 1))


def enumerate_attacker_strategies(defenses: Sequence[Defense], params: Optional[dict] = None) -> list:
    """MIME on each randomized defense, APGD on each deterministic one, AE-SAGA on every pair."""
    if not defenses:
        raise ValueError("need at least one defense")
    params = {**DEFAULT_PARAMS, **(params or {})}
    out = []
    for d in defenses:
        algo = "MIME" if d.is_randomized else "APGD"
        out.append(AttackSpec(algo, (d.id,), params[algo]))
    for a, b in itertools.combinations(defenses, 2):
        out.append(AttackSpec("AESAGA", (a.id, b.id), params["AESAGA"]))
    return out


def _members(strategy: DefenderStrategy, defenses: dict) -> list:
    try:
        return [defenses[m] for m in strategy.members]
    except KeyError as exc:
        raise ConfigurationError(f"strategy {strategy.id} names unknown defense {exc.args[0]!r}") from None


def strategy_predict(strategy: DefenderStrategy, defenses: dict, x, rng: Optional[np.random.Generator] = None):
    """Label(s) assigned by the strategy's members under its voting function."""
    x = np.asarray(x, dtype=np.float64)
    X = np.atleast_2d(x)
    logits = np.stack([predict_logits(d, X, rng) for d in _members(strategy, defenses)])
    if len(strategy.members) == 1:
        labels = np.argmax(logits[0], axis=1)
    elif strategy.voting == "hard":
        labels = vote_hard_batch(logits)
    else:
        labels = vote_soft_batch(logits)
    return int(labels[0]) if x.ndim == 1 else labels


def strategy_correct(strategy: DefenderStrategy, defenses: dict, X, y, trials: int = 1,
                     rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Per-sample correctness, by majority over ``trials`` evaluations when members are stochastic."""
    members = _members(strategy, defenses)
    if not any(d.is_randomized for d in members):
        trials = 1
    hits = np.zeros(len(y), dtype=np.int64)
    for _ in range(trials):
        hits += strategy_predict(strategy, defenses, X, rng) == y
    return 2 * hits > trials


def estimate_payoff(strategy: DefenderStrategy, batch: AdversarialBatch, defenses: dict, trials: int = 1,
                    rng: Optional[np.random.Generator] = None) -> float:
    if len(batch) == 0:
        raise ValueError("empty adversarial batch")
    return float(np.mean(strategy_correct(strategy, defenses, batch.perturbed, batch.labels, trials, rng)))


def cell_rng(root_seed: int, strategy_id: str, attack_id: str, tag: str = "payoff") -> np.random.Generator:
    return substream(root_seed, tag, strategy_id, attack_id)


def build_payoff_matrix(strategies: Sequence[DefenderStrategy], attack_ids: Sequence[str], batches: dict,
                        defenses: dict, root_seed: int, trials: int = 1, threads: int = 1,
                        tag: str = "payoff") -> PayoffMatrix:
    """R[d][a] = robust accuracy of strategy d on attack a's batch.

    Each cell draws from its own substream keyed by (strategy id, attack id),
    so the result does not depend on evaluation order or thread count.
    """
    missing = [a for a in attack_ids if a not in batches]
    if missing:
        raise ConfigurationError(f"no adversarial batch for attacks {missing}")
    sizes = {len(batches[a]) for a in attack_ids}
    if len(sizes) != 1:
        raise ConfigurationError("all attack batches must come from the same sample set")
    for s in strategies:
        _members(s, defenses)

    def cell(ij):
        i, j = ij
        s, a = strategies[i], attack_ids[j]
        return estimate_payoff(s, batches[a], defenses, trials, cell_rng(root_seed, s.id, a, tag))

    cells = [(i, j) for i in range(len(strategies)) for j in range(len(attack_ids))]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(cell, cells))
    else:
        values = [cell(c) for c in cells]
    R = np.array(values).reshape(len(strategies), len(attack_ids))
    return PayoffMatrix([s.id for s in strategies], list(attack_ids), R, sizes.pop(),
                        {"root_seed": root_seed, "trials": trials, "tag": tag})


def sample_strategy(mixed: np.ndarray, rng: np.random.Generator, size: Optional[int] = None):
    """Index (or ``size`` indices) drawn with probabilities ``mixed``."""
    p = np.asarray(mixed, dtype=np.float64)
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("mixed strategy must be a probability vector")
    cdf = np.cumsum(p)
    cdf[-1] = 1.0
    u = rng.random(size)
    idx = np.searchsorted(cdf, u, side="right")
    # zero-probability strategies can never be drawn
    idx = np.minimum(idx, len(p) - 1)
    return int(idx) if size is None else idx


def mixed_correct(lambda_d: np.ndarray, strategies: Sequence[DefenderStrategy], X, y, defenses: dict,
                  rng: np.random.Generator) -> tuple:
    """Play the mixed strategy once per query; returns (correct flags, chosen strategy indices)."""
    chosen = sample_strategy(lambda_d, rng, size=len(y))
    correct = np.zeros(len(y), dtype=bool)
    for i in np.unique(chosen):
        rows = np.flatnonzero(chosen == i)
        correct[rows] = strategy_predict(strategies[i], defenses, X[rows], rng) == y[rows]
    return correct, chosen


def evaluate_ensemble(lambda_d: np.ndarray, strategies: Sequence[DefenderStrategy], holdout_batches: dict,
                      defenses: dict, root_seed: int, clean: Optional[tuple] = None,
                      holdout_matrix: Optional[PayoffMatrix] = None) -> dict:
    """Robust accuracy of the mixed ensemble on each holdout attack batch.

    ``per_attack`` is measured by sampling a strategy per query.  When the
    per-strategy holdout matrix is supplied, the exact expectation
    ``lambda_d @ R_holdout`` is reported alongside.
    """
    lambda_d = np.asarray(lambda_d, dtype=np.float64)
    per_attack = {}
    for attack_id, batch in holdout_batches.items():
        rng = substream(root_seed, "ensemble-eval", attack_id)
        correct, _ = mixed_correct(lambda_d, strategies, batch.perturbed, batch.labels, defenses, rng)
        per_attack[attack_id] = float(correct.mean())
    worst = min(per_attack, key=per_attack.get)
    report = {"per_attack": per_attack, "minimum": per_attack[worst], "worst_attack": worst}
    if clean is not None:
        X, y = clean
        correct, _ = mixed_correct(lambda_d, strategies, X, y, defenses, substream(root_seed, "ensemble-clean"))
        report["clean_accuracy"] = float(correct.mean())
    if holdout_matrix is not None:
        expected = lambda_d @ holdout_matrix.values
        report["expected_per_attack"] = dict(zip(holdout_matrix.attack_ids, map(float, expected)))
        report["expected_minimum"] = float(expected.min())
    return report
