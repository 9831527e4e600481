"""Multi-head attention, post-norm sub-layers and encoder/decoder stacks."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .autodiff import Tensor, ops
from .nn import Linear, Module, param


@dataclass(frozen=True)
class BlockConfig:
    d_model: int = 100
    n_layers: int = 2
    n_heads: int = 8
    d_ff: Optional[int] = None
    dropout: float = 0.1

    def __post_init__(self):
        if min(self.d_model, self.n_layers, self.n_heads) <= 0:
            raise ValueError("block sizes must be positive")
        if self.d_ff is None:
            object.__setattr__(self, "d_ff", 4 * self.d_model)
        if self.d_ff <= 0 or not 0.0 <= self.dropout < 1.0:
            raise ValueError("d_ff must be positive and dropout in [0, 1)")

    @property
    def d_head(self) -> int:
        # 100 units over 8 heads does not divide evenly; round each head up
        return math.ceil(self.d_model / self.n_heads)


def sinusoidal_encoding(position_tag, d_model: int) -> np.ndarray:
    """Sine/cosine encoding of (possibly negative) position tags.

    Accepts a scalar or an integer array; the encoding is appended as a new
    trailing axis of width ``d_model``.
    """
    tags = np.asarray(position_tag, dtype=np.float64)
    i = np.arange(d_model)
    rates = 1.0 / np.power(10000.0, (i - i % 2) / d_model)
    angles = tags[..., None] * rates
    return np.where(i % 2 == 0, np.sin(angles), np.cos(angles))


def causal_allow(n: int, direction: str = "l2r") -> np.ndarray:
    """Allow matrix [query, key]; l2r denies later keys, r2l denies earlier ones."""
    q = np.arange(n)[:, None]
    k = np.arange(n)[None, :]
    if direction == "l2r":
        return k <= q
    if direction == "r2l":
        return k >= q
    raise ValueError(f"unknown direction {direction!r}")


def padding_allow(valid: np.ndarray) -> np.ndarray:
    """(B, T) validity flags to a (B, 1, T) key-allow mask."""
    return np.asarray(valid, dtype=bool)[:, None, :]


class MultiHeadAttention(Module):
    def __init__(self, rng, d_model: int, n_heads: int):
        self.n_heads = n_heads
        self.d_head = math.ceil(d_model / n_heads)
        inner = self.n_heads * self.d_head
        self.query = Linear(rng, d_model, inner)
        # a key bias shifts every score of a query equally, so softmax ignores it
        self.key = Linear(rng, d_model, inner, bias=False)
        self.value = Linear(rng, d_model, inner)
        self.output = Linear(rng, inner, d_model)

    def _split(self, x: Tensor) -> Tensor:
        b, t, _ = x.shape
        return ops.transpose(ops.reshape(x, (b, t, self.n_heads, self.d_head)), (0, 2, 1, 3))

    def weights(self, queries: Tensor, keys: Tensor, allow: np.ndarray) -> Tensor:
        """Attention probabilities of shape (B, heads, Tq, Tk)."""
        allow = np.asarray(allow, dtype=bool)
        b, tq = queries.shape[:2]
        tk = keys.shape[1]
        full = np.broadcast_to(allow, (b, tq, tk)) if allow.ndim == 3 else np.broadcast_to(allow, (tq, tk))
        if not full.any(axis=-1).all():
            raise ValueError("attention mask denies every key for some query")
        q = self._split(self.query(queries))
        k = self._split(self.key(keys))
        scores = ops.scale(ops.matmul(q, ops.transpose(k, (0, 1, 3, 2))), 1.0 / math.sqrt(self.d_head))
        deny = ~(allow[:, None] if allow.ndim == 3 else allow)
        return ops.softmax(ops.masked_fill(scores, np.broadcast_to(deny, scores.shape)))

    def __call__(self, queries: Tensor, keys: Tensor, values: Tensor, allow: np.ndarray) -> Tensor:
        attn = self.weights(queries, keys, allow)
        v = self._split(self.value(values))
        ctx = ops.matmul(attn, v)
        b, _, tq, _ = ctx.shape
        merged = ops.reshape(ops.transpose(ctx, (0, 2, 1, 3)), (b, tq, self.n_heads * self.d_head))
        return self.output(merged)


class TransformerLayer(Module):
    """Self-attention and feed-forward sub-layers, each residual then layer-norm."""

    def __init__(self, rng, config: BlockConfig):
        d = config.d_model
        self.attention = MultiHeadAttention(rng, d, config.n_heads)
        self.norm1_gain = param(np.ones(d))
        self.norm1_bias = param(np.zeros(d))
        self.ff_in = Linear(rng, d, config.d_ff)
        self.ff_out = Linear(rng, config.d_ff, d)
        self.norm2_gain = param(np.ones(d))
        self.norm2_bias = param(np.zeros(d))
        self.dropout = config.dropout

    def __call__(self, x: Tensor, allow: np.ndarray, rng=None) -> Tensor:
        attended = ops.dropout(self.attention(x, x, x, allow), self.dropout, rng)
        h = ops.layer_norm(ops.add(x, attended), self.norm1_gain, self.norm1_bias)
        ff = ops.dropout(self.ff_out(ops.tanh(self.ff_in(h))), self.dropout, rng)
        return ops.layer_norm(ops.add(h, ff), self.norm2_gain, self.norm2_bias)


class TransformerStack(Module):
    def __init__(self, rng, config: BlockConfig):
        self.config = config
        self.layers = [TransformerLayer(rng, config) for _ in range(config.n_layers)]

    def __call__(self, x: Tensor, allow: np.ndarray, rng=None) -> Tensor:
        x = ops.dropout(x, self.config.dropout, rng)
        for layer in self.layers:
            x = layer(x, allow, rng)
        return x


def encoder_forward(stack: TransformerStack, inputs: Tensor, valid: np.ndarray, rng=None) -> Tensor:
    """Bidirectional pass; ``inputs`` are pre-summed (B, T, d_model) embeddings."""
    return stack(inputs, padding_allow(valid), rng)


def decoder_forward(stack: TransformerStack, inputs: Tensor, direction: str = "l2r", rng=None) -> Tensor:
    """Unidirectional pass: position t sees only positions allowed by the causal mask."""
    return stack(inputs, causal_allow(inputs.shape[1], direction), rng)
