"""Deterministic desk-scale transformer encoder.

Post-LN blocks with single-head attention and a GELU FFN. Weights are drawn
from a seeded generator, never trained; the model exists to give the cache
something with realistic per-layer cost and nonlinear input dependence.
Activations are row-major: a hidden state is ``n x d`` and weight matrices
follow the ``out x in`` convention, so a projection is ``h @ W.T``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from llmcache.errors import EmptySequence, NumericsError, ShapeError, VocabError

LN_EPS = 1e-5


@dataclass(frozen=True)
class ModelConfig:
    vocab: int = 1024
    dim: int = 256
    layers: int = 12
    ffn_dim: int | None = None
    seed: int = 0

    def __post_init__(self) -> None:
        if self.ffn_dim is None:
            object.__setattr__(self, "ffn_dim", 4 * self.dim)
        for name in ("vocab", "dim", "layers", "ffn_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"model.{name} must be positive, got {getattr(self, name)}")
        if self.dim % 2:
            raise ValueError(f"model.dim must be even, got {self.dim}")


@dataclass(frozen=True, eq=False)
class LayerWeights:
    wq: np.ndarray
    wk: np.ndarray
    wv: np.ndarray
    wo: np.ndarray
    w1: np.ndarray
    w2: np.ndarray
    ln1_scale: np.ndarray
    ln1_shift: np.ndarray
    ln2_scale: np.ndarray
    ln2_shift: np.ndarray


@dataclass(frozen=True, eq=False)
class ModelWeights:
    config: ModelConfig
    embedding: np.ndarray
    layers: tuple[LayerWeights, ...] = field(repr=False)

    @classmethod
    def init(cls, config: ModelConfig) -> "ModelWeights":
        """Draw every matrix from N(0, 1/d) in a fixed order from ``config.seed``."""
        rng = np.random.default_rng(config.seed)
        d, ffn = config.dim, config.ffn_dim
        scale = 1.0 / math.sqrt(d)

        def draw(*shape: int) -> np.ndarray:
            a = rng.standard_normal(shape) * scale
            a.setflags(write=False)
            return a

        def const(value: float) -> np.ndarray:
            a = np.full(d, value)
            a.setflags(write=False)
            return a

        embedding = draw(config.vocab, d)
        layers = tuple(
            LayerWeights(
                wq=draw(d, d), wk=draw(d, d), wv=draw(d, d), wo=draw(d, d),
                w1=draw(ffn, d), w2=draw(d, ffn),
                ln1_scale=const(1.0), ln1_shift=const(0.0),
                ln2_scale=const(1.0), ln2_shift=const(0.0),
            )
            for _ in range(config.layers)
        )
        return cls(config, embedding, layers)

    @property
    def num_layers(self) -> int:
        return len(self.layers)


@dataclass(frozen=True, eq=False)
class HiddenState:
    values: np.ndarray
    layer_index: int

    def __post_init__(self) -> None:
        if self.values.ndim != 2 or self.values.shape[0] < 1:
            raise ShapeError(f"hidden state must be n x d with n >= 1, got {self.values.shape}")

    @property
    def seq_len(self) -> int:
        return int(self.values.shape[0])


def layer_norm(x: np.ndarray, scale: np.ndarray, shift: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + LN_EPS) * scale + shift


def softmax(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + np.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * (x * x * x))))


def attention(h: np.ndarray, w: LayerWeights, query_rows: int | None = None) -> np.ndarray:
    """Single-head attention sublayer output ``softmax(QK^T/sqrt(d)) V Wo^T``.

    With ``query_rows`` set, only the first that many output rows are computed
    (keys and values still span the whole sequence).
    """
    q_in = h if query_rows is None else h[:query_rows]
    q = q_in @ w.wq.T
    k = h @ w.wk.T
    v = h @ w.wv.T
    scores = (q @ k.T) / math.sqrt(h.shape[1])
    return (softmax(scores) @ v) @ w.wo.T


def embed(tokens: Sequence[int] | np.ndarray, weights: ModelWeights) -> HiddenState:
    ids = np.asarray(tokens)
    if ids.ndim != 1:
        raise ShapeError(f"tokens must be a flat sequence, got shape {ids.shape}")
    if ids.size == 0:
        raise EmptySequence("cannot embed an empty token sequence")
    if not np.issubdtype(ids.dtype, np.integer):
        raise VocabError(f"token ids must be integers, got dtype {ids.dtype}")
    vocab = weights.config.vocab
    if ids.min() < 0 or ids.max() >= vocab:
        raise VocabError(f"token id out of range [0, {vocab})")
    return HiddenState(weights.embedding[ids], 0)


def layer_forward(l: int, h: HiddenState, weights: ModelWeights) -> HiddenState:
    """Apply block ``l`` (1-based) to the output of block ``l - 1``."""
    if not 1 <= l <= weights.num_layers:
        raise ShapeError(f"layer index {l} outside [1, {weights.num_layers}]")
    if h.layer_index != l - 1:
        raise ShapeError(f"layer {l} expects input from layer {l - 1}, got layer {h.layer_index}")
    w = weights.layers[l - 1]
    x = h.values
    x = layer_norm(x + attention(x, w), w.ln1_scale, w.ln1_shift)
    x = layer_norm(x + gelu(x @ w.w1.T) @ w.w2.T, w.ln2_scale, w.ln2_shift)
    if not np.all(np.isfinite(x)):
        raise NumericsError(f"non-finite activation at layer {l}")
    return HiddenState(x, l)


def forward_nocache(
    tokens: Sequence[int] | np.ndarray, weights: ModelWeights
) -> tuple[HiddenState, list[HiddenState]]:
    """Full layer-by-layer pass; returns the final state and every layer's output (1..L)."""
    h = embed(tokens, weights)
    states = []
    for l in range(1, weights.num_layers + 1):
        h = layer_forward(l, h, weights)
        states.append(h)
    return h, states
