"""Randomized input-transformation pipelines over vectors in [0, 1]^d.

A :class:`TransformDistribution` holds ``N`` transform families and a draw
count ``n``.  Sampling a pipeline picks ``n`` distinct families uniformly
without replacement, puts them in a uniformly random order and draws each
family's parameters uniformly from its range.  Every stage is followed by a
clip to the unit box.

Pipelines are stored batched: a :class:`TransformPipeline` with ``rows == 1``
broadcasts over any batch of inputs, otherwise row ``i`` of the pipeline is
applied to input row ``i``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigurationError

KINDS = ("additiveNoise", "channelScale", "coordinateShift", "boxSmooth", "quantize")
_INTEGER_KINDS = {"boxSmooth", "quantize"}


@dataclass(frozen=True)
class TransformFamily:
    kind: str
    low: float
    high: float

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigurationError(f"unknown transform kind {self.kind!r}")
        if self.high < self.low:
            raise ConfigurationError(f"empty parameter range for {self.kind}")
        if self.kind == "boxSmooth" and not (1 <= self.low and self.high <= 3):
            raise ConfigurationError("boxSmooth window must lie in 1..3")
        if self.kind == "quantize" and self.low < 2:
            raise ConfigurationError("quantize needs at least 2 levels")
        if self.kind in _INTEGER_KINDS and (self.low != int(self.low) or self.high != int(self.high)):
            raise ConfigurationError(f"{self.kind} takes an integer range")

    def is_identity(self) -> bool:
        """True when every parameter in the range leaves inputs untouched."""
        if self.low != self.high:
            return False
        return {"additiveNoise": 0.0, "channelScale": 1.0, "coordinateShift": 0.0,
                "boxSmooth": 1.0}.get(self.kind) == self.low

    def to_dict(self) -> dict:
        return {"kind": self.kind, "range": [self.low, self.high]}

    @classmethod
    def from_dict(cls, doc: dict) -> "TransformFamily":
        low, high = doc["range"]
        return cls(doc["kind"], float(low), float(high))


@dataclass(frozen=True)
class TransformDistribution:
    families: tuple
    draw_count: int

    def __post_init__(self):
        object.__setattr__(self, "families", tuple(self.families))
        if not 0 <= self.draw_count <= len(self.families):
            raise ConfigurationError("draw count must satisfy 0 <= n <= N")

    def is_identity(self) -> bool:
        return self.draw_count == 0 or all(f.is_identity() for f in self.families)

    def to_dict(self) -> dict:
        return {"families": [f.to_dict() for f in self.families], "n": self.draw_count}

    @classmethod
    def from_dict(cls, doc: dict) -> "TransformDistribution":
        return cls(tuple(TransformFamily.from_dict(f) for f in doc["families"]), int(doc["n"]))


@dataclass
class TransformPipeline:
    """Sampled pipelines: ``order[r, j]`` is the family applied at stage ``j`` for row ``r``."""

    families: tuple
    order: np.ndarray   # (rows, n) int
    params: np.ndarray  # (rows, n) float, one scalar parameter per stage
    noise: np.ndarray   # (rows, n, d) standard-normal draws, used by additiveNoise stages

    @property
    def rows(self) -> int:
        return self.order.shape[0]

    @property
    def length(self) -> int:
        return self.order.shape[1]

    def stages(self, row: int = 0) -> list:
        return [(int(k), self.families[k].kind, float(p)) for k, p in zip(self.order[row], self.params[row])]


def sample_pipeline(dist: TransformDistribution, rng: np.random.Generator, dim: int,
                    count: int = 1) -> TransformPipeline:
    """Draw ``count`` independent pipelines for inputs of dimension ``dim``."""
    N, n = len(dist.families), dist.draw_count
    # argsort of iid uniforms is a uniform permutation; its first n entries are a
    # uniform ordered draw without replacement.
    order = np.argsort(rng.random((count, N)), axis=1, kind="stable")[:, :n]
    lows = np.array([f.low for f in dist.families])
    highs = np.array([f.high for f in dist.families])
    u = rng.random((count, n))
    params = np.empty((count, n))
    for j in range(n):
        k = order[:, j]
        cont = lows[k] + u[:, j] * (highs[k] - lows[k])
        # integer families: uniform over {low, ..., high}
        ints = np.floor(lows[k] + u[:, j] * (highs[k] - lows[k] + 1))
        is_int = np.array([dist.families[i].kind in _INTEGER_KINDS for i in k], dtype=bool)
        params[:, j] = np.where(is_int, np.minimum(ints, highs[k]), cont)
    noise = rng.standard_normal((count, n, dim))
    return TransformPipeline(dist.families, order, params, noise)


@lru_cache(maxsize=64)
def _smoothing_matrix(dim: int, window: int) -> np.ndarray:
    """Averaging operator over a window of coordinates, truncated at the edges."""
    A = np.zeros((dim, dim))
    left = (window - 1) // 2
    for i in range(dim):
        lo, hi = max(0, i - left), min(dim, i - left + window)
        A[i, lo:hi] = 1.0 / (hi - lo)
    A.setflags(write=False)
    return A


def _stage(kind: str, X: np.ndarray, p: np.ndarray, noise: np.ndarray) -> np.ndarray:
    if kind == "additiveNoise":
        return X + p[:, None] * noise
    if kind == "channelScale":
        return X * p[:, None]
    if kind == "coordinateShift":
        return X + p[:, None]
    if kind == "boxSmooth":
        out = np.empty_like(X)
        for w in np.unique(p):
            rows = p == w
            out[rows] = X[rows] @ _smoothing_matrix(X.shape[1], int(w)).T
        return out
    levels = p[:, None] - 1.0
    return np.round(X * levels) / levels


def _stage_pullback(kind: str, G: np.ndarray, p: np.ndarray) -> np.ndarray:
    if kind == "channelScale":
        return G * p[:, None]
    if kind == "boxSmooth":
        out = np.empty_like(G)
        for w in np.unique(p):
            rows = p == w
            out[rows] = G[rows] @ _smoothing_matrix(G.shape[1], int(w))
        return out
    # noise and shift are translations; quantize is straight-through
    return G


def _broadcast(pipeline: TransformPipeline, m: int):
    if pipeline.rows == m:
        return pipeline.order, pipeline.params, pipeline.noise
    if pipeline.rows == 1:
        return (np.repeat(pipeline.order, m, axis=0), np.repeat(pipeline.params, m, axis=0),
                np.repeat(pipeline.noise, m, axis=0))
    raise ValueError(f"pipeline has {pipeline.rows} rows but input batch has {m}")


def _run(pipeline: TransformPipeline, X: np.ndarray, keep_trace: bool):
    order, params, noise = _broadcast(pipeline, len(X))
    trace = []
    out = X.copy()
    for j in range(order.shape[1]):
        pre = np.empty_like(out)
        for k in np.unique(order[:, j]):
            rows = order[:, j] == k
            pre[rows] = _stage(pipeline.families[k].kind, out[rows], params[rows, j], noise[rows, j])
        out = np.clip(pre, 0.0, 1.0)
        if keep_trace:
            trace.append((pre >= 0.0) & (pre <= 1.0))
    return out, trace, order, params


def apply(pipeline: TransformPipeline, x) -> np.ndarray:
    """Run the pipeline on ``x`` (one vector or a batch), clipping after every stage."""
    x = np.asarray(x, dtype=np.float64)
    X = np.atleast_2d(x)
    out, _, _, _ = _run(pipeline, X, keep_trace=False)
    return out[0] if x.ndim == 1 else out


def pipeline_input_jacobian_vector(pipeline: TransformPipeline, x, upstream) -> np.ndarray:
    """Pull ``upstream`` (dL/dt(x)) back through the pipeline to dL/dx.

    Clipped coordinates pass no gradient; quantize is treated as the identity.
    """
    x = np.asarray(x, dtype=np.float64)
    X = np.atleast_2d(x)
    G = np.array(np.atleast_2d(upstream), dtype=np.float64)
    _, trace, order, params = _run(pipeline, X, keep_trace=True)
    for j in reversed(range(order.shape[1])):
        G = G * trace[j]
        back = np.empty_like(G)
        for k in np.unique(order[:, j]):
            rows = order[:, j] == k
            back[rows] = _stage_pullback(pipeline.families[k].kind, G[rows], params[rows, j])
        G = back
    return G[0] if x.ndim == 1 else G


LossGradOracle = Callable[[np.ndarray], tuple]


def expected_loss_gradient(dist: TransformDistribution, oracle: LossGradOracle, x, n_mc: int,
                           rng: np.random.Generator, return_loss: bool = False):
    """Monte-Carlo estimate of E_t[pullback of dL/dt(x)] over ``n_mc`` fresh pipelines.

    ``oracle`` maps a batch of transformed inputs to ``(losses, gradients)``.
    Each input row gets its own ``n_mc`` independent pipelines.
    """
    if n_mc < 1:
        raise ValueError("need at least one Monte-Carlo sample")
    x = np.asarray(x, dtype=np.float64)
    X = np.atleast_2d(x)
    if dist.is_identity():
        loss, grad = oracle(X)
    else:
        grad = np.zeros_like(X)
        loss = np.zeros(len(X))
        for _ in range(n_mc):
            pipe = sample_pipeline(dist, rng, X.shape[1], count=len(X))
            tx = apply(pipe, X)
            l_j, g_j = oracle(tx)
            grad += pipeline_input_jacobian_vector(pipe, X, g_j)
            loss += l_j
        grad /= n_mc
        loss /= n_mc
    if x.ndim == 1:
        loss, grad = float(np.asarray(loss)[0]), grad[0]
    return (loss, grad) if return_loss else grad


def make_augmenter(dist: TransformDistribution) -> Callable[[np.ndarray, np.random.Generator], np.ndarray]:
    """Minibatch augmentation that pushes every row through its own sampled pipeline."""
    def augment(X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return apply(sample_pipeline(dist, rng, X.shape[1], count=len(X)), X)
    return augment


def family_frequencies(dist: TransformDistribution, rng: np.random.Generator, draws: int) -> np.ndarray:
    """Fraction of draws in which each family is selected (diagnostic)."""
    pipe = sample_pipeline(dist, rng, 1, count=draws)
    counts = np.zeros(len(dist.families))
    for k in range(len(dist.families)):
        counts[k] = np.any(pipe.order == k, axis=1).sum()
    return counts / draws


def distribution_from_spec(items: Sequence[dict], n: int) -> TransformDistribution:
    return TransformDistribution(tuple(TransformFamily.from_dict(i) for i in items), n)
