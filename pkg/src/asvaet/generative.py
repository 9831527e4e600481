"""Generative network p(x | y, a, z): two aspect-first Transformer decoders.

Token space: the word vocabulary followed by three reserved entries,
``BOS_L``, ``BOS_R`` and ``EOS``.  The left decoder reads
``[BOS_L, a, reversed(x_l)]`` and the right decoder ``[BOS_R, a, x_r]``;
both score the context tokens that follow the aspect plus a final EOS.
Aspect tokens are conditioning only and never scored.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

from .autodiff import Tensor, no_grad, ops
from .data import TokenizedSample
from .nn import Linear, Module, param
from .recognition import N_LABELS
from .transformer import BlockConfig, TransformerStack, decoder_forward, sinusoidal_encoding


@dataclass(frozen=True)
class TokenSpace:
    n_words: int

    @property
    def bos_left(self) -> int:
        return self.n_words

    @property
    def bos_right(self) -> int:
        return self.n_words + 1

    @property
    def eos(self) -> int:
        return self.n_words + 2

    @property
    def size(self) -> int:
        return self.n_words + 3


@dataclass
class DecoderSide:
    """Teacher-forcing arrays for one decoder; scored positions predict ``targets``."""

    inputs: np.ndarray   # (B, T) ids in decoding order
    tags: np.ndarray     # (B, T) signed position tags
    rows: np.ndarray     # flat (B*T) indices of scored positions
    targets: np.ndarray  # target id for each scored position
    owner: np.ndarray    # batch row of each scored position

    def repeat(self, times: int) -> "DecoderSide":
        """Each row repeated ``times`` consecutively (row i -> i*times .. i*times+times-1)."""
        b, t = self.inputs.shape
        local = self.rows - self.owner * t
        new_owner = (self.owner[:, None] * times + np.arange(times)[None, :])
        order = np.argsort(new_owner.reshape(-1), kind="stable")
        rows = (new_owner * t + local[:, None]).reshape(-1)[order]
        return DecoderSide(
            inputs=np.repeat(self.inputs, times, axis=0),
            tags=np.repeat(self.tags, times, axis=0),
            rows=rows,
            targets=np.repeat(self.targets[:, None], times, axis=1).reshape(-1)[order],
            owner=new_owner.reshape(-1)[order],
        )


def _side(sequences, tags, n_aspect, eos, pad) -> DecoderSide:
    b = len(sequences)
    t = max(len(s) for s in sequences)
    inputs = np.full((b, t), pad, dtype=np.intp)
    tag_arr = np.zeros((b, t), dtype=np.intp)
    rows, targets, owner = [], [], []
    for i, (seq, tg, la) in enumerate(zip(sequences, tags, n_aspect)):
        inputs[i, : len(seq)] = seq
        tag_arr[i, : len(seq)] = tg
        nxt = list(seq[1:]) + [eos]
        # BOS at 0, aspect at 1..la; positions la.. predict context then EOS
        for j in range(la, len(seq)):
            rows.append(i * t + j)
            targets.append(nxt[j])
            owner.append(i)
    return DecoderSide(inputs, tag_arr, np.array(rows, dtype=np.intp),
                       np.array(targets, dtype=np.intp), np.array(owner, dtype=np.intp))


@dataclass
class DecoderBatch:
    left: DecoderSide
    right: DecoderSide
    n_rows: int

    @classmethod
    def build(cls, samples: Sequence[TokenizedSample], space: TokenSpace, pad: int = 0) -> "DecoderBatch":
        lseq, ltag, rseq, rtag, la = [], [], [], [], []
        for s in samples:
            a = list(s.aspect_ids)
            left = list(reversed(s.left_ids))
            right = list(s.right_ids)
            lseq.append([space.bos_left] + a + left)
            ltag.append([0] * (1 + len(a)) + [-(i + 1) for i in range(len(left))])
            rseq.append([space.bos_right] + a + right)
            rtag.append([0] * (1 + len(a)) + [i + 1 for i in range(len(right))])
            la.append(len(a))
        return cls(_side(lseq, ltag, la, space.eos, pad), _side(rseq, rtag, la, space.eos, pad), len(samples))

    def repeat(self, times: int) -> "DecoderBatch":
        return DecoderBatch(self.left.repeat(times), self.right.repeat(times), self.n_rows * times)


@dataclass
class ReconstructionLogLik:
    left: Tensor   # (B,)
    right: Tensor  # (B,)

    @property
    def total(self) -> Tensor:
        return ops.add(self.left, self.right)


class GenerativeModel(Module):
    def __init__(self, rng, config: BlockConfig, n_out: int, z_dim: int = 50):
        d = config.d_model
        self.config = config
        self.left_decoder = TransformerStack(rng, config)
        self.right_decoder = TransformerStack(rng, config)
        self.z_projection = Linear(rng, z_dim, d)
        self.y_embedding = param(rng.normal(0.0, 0.1, size=(N_LABELS, d)))
        # one output projection serves both directions
        self.output = Linear(rng, d, n_out)

    def decoder_step_inputs(self, token_inputs: Tensor, tags: np.ndarray, y, z: Tensor) -> Tensor:
        """Per-step input e_token + pos(tag) + y_embedding[y] + z_projection(z)."""
        b, t, d = token_inputs.shape
        pos = Tensor(sinusoidal_encoding(tags, d))
        cond = ops.add(ops.embedding_lookup(self.y_embedding, np.asarray(y, dtype=np.intp)),
                       self.z_projection(z))
        return ops.add(ops.add(token_inputs, pos), ops.reshape(cond, (b, 1, d)))

    def hidden(self, stack: TransformerStack, token_inputs: Tensor, tags, y, z, rng=None) -> Tensor:
        return decoder_forward(stack, self.decoder_step_inputs(token_inputs, tags, y, z), "l2r", rng)

    def _side_loglik(self, stack, side: DecoderSide, embed: Callable, y, z, rng) -> Tensor:
        h = self.hidden(stack, embed(side.inputs), side.tags, y, z, rng)
        b, t, d = h.shape
        flat = ops.reshape(h, (b * t, d))
        scored = ops.embedding_lookup(flat, side.rows)
        logp = ops.pick(ops.log_softmax(self.output(scored)), side.targets)
        gather = np.zeros((b, side.rows.size))
        gather[side.owner, np.arange(side.rows.size)] = 1.0
        return ops.reshape(ops.matmul(Tensor(gather), ops.reshape(logp, (-1, 1))), (b,))

    def reconstruction_loglik(self, batch: DecoderBatch, embed: Callable, y, z: Tensor,
                              rng=None) -> ReconstructionLogLik:
        """Teacher-forced log-likelihood of left and right contexts, per row."""
        left = self._side_loglik(self.left_decoder, batch.left, embed, y, z, rng)
        right = self._side_loglik(self.right_decoder, batch.right, embed, y, z, rng)
        return ReconstructionLogLik(left, right)

    def step_log_probs(self, stack: TransformerStack, prefix: Sequence[int], tags: Sequence[int],
                       embed: Callable, y: int, z: np.ndarray) -> np.ndarray:
        """Next-token log-probabilities after ``prefix`` (single sequence)."""
        ids = np.asarray([prefix], dtype=np.intp)
        x = self.decoder_step_inputs(embed(ids), np.asarray([tags]), [y],
                                     Tensor(np.asarray(z, dtype=np.float64)[None]))
        h = decoder_forward(stack, x)
        last = ops.reshape(h[:, -1], (1, -1))
        return ops.log_softmax(self.output(last)).data[0]


def _incremental_hidden(stack: TransformerStack, inputs: np.ndarray) -> np.ndarray:
    """Top-layer states computed one position at a time from cached lower-layer states.

    Position t only ever meets the cached rows 0..t, so no attention mask is involved.
    """
    t_len = inputs.shape[0]
    below = inputs
    for layer in stack.layers:
        rows = []
        for t in range(t_len):
            q = Tensor(below[None, t:t + 1])
            kv = Tensor(below[None, : t + 1])
            attended = layer.attention(q, kv, kv, np.ones((1, t + 1), dtype=bool))
            h = ops.layer_norm(ops.add(q, attended), layer.norm1_gain, layer.norm1_bias)
            ff = layer.ff_out(ops.tanh(layer.ff_in(h)))
            rows.append(ops.layer_norm(ops.add(h, ff), layer.norm2_gain, layer.norm2_bias).data[0, 0])
        below = np.stack(rows)
    return below


def sequential_loglik(model: GenerativeModel, sample: TokenizedSample, space: TokenSpace,
                      embed: Callable, y: int, z: np.ndarray) -> Tuple[float, float]:
    """Step-at-a-time teacher-forced log-likelihood; independent of the causal mask."""
    out = []
    z = Tensor(np.asarray(z, dtype=np.float64)[None])
    with no_grad():
        for stack, bos, context, sign in (
            (model.left_decoder, space.bos_left, list(reversed(sample.left_ids)), -1),
            (model.right_decoder, space.bos_right, list(sample.right_ids), 1),
        ):
            seq = [bos] + list(sample.aspect_ids) + context
            tags = [0] * (1 + len(sample.aspect_ids)) + [sign * (k + 1) for k in range(len(context))]
            x = model.decoder_step_inputs(embed(np.asarray([seq], dtype=np.intp)), np.asarray([tags]), [y], z)
            h = _incremental_hidden(stack, x.data[0])
            logp = ops.log_softmax(model.output(Tensor(h))).data
            first = len(sample.aspect_ids)
            targets = context + [space.eos]
            out.append(float(sum(logp[first + k, tok] for k, tok in enumerate(targets))))
    return out[0], out[1]


def generate(model: GenerativeModel, space: TokenSpace, embed: Callable, y: int, z,
             aspect_ids: Sequence[int], max_steps: int = 20, mode: str = "greedy",
             temperature: float = 1.0, rng: Optional[np.random.Generator] = None,
             banned: Sequence[int] = ()) -> Tuple[List[int], List[int]]:
    """Decode left and right contexts around an aspect; returns (left_in_order, right)."""
    if mode not in ("greedy", "sample"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "sample" and rng is None:
        raise ValueError("sampling needs an rng")
    deny = np.array(sorted({space.bos_left, space.bos_right, *banned}), dtype=np.intp)
    z = np.asarray(z, dtype=np.float64)
    sides = []
    with no_grad():
        for stack, bos, sign in ((model.left_decoder, space.bos_left, -1),
                                 (model.right_decoder, space.bos_right, 1)):
            prefix = [bos] + list(aspect_ids)
            tags = [0] * len(prefix)
            emitted: List[int] = []
            for k in range(max_steps):
                logp = model.step_log_probs(stack, prefix, tags, embed, y, z).copy()
                logp[deny] = -np.inf
                if mode == "greedy":
                    tok = int(np.argmax(logp))
                else:
                    w = np.exp((logp - logp.max()) / temperature)
                    tok = int(rng.choice(logp.size, p=w / w.sum()))
                if tok == space.eos:
                    break
                emitted.append(tok)
                prefix.append(tok)
                tags.append(sign * (k + 1))
            sides.append(emitted)
    return list(reversed(sides[0])), sides[1]
