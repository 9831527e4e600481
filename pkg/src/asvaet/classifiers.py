"""Pluggable aspect classifiers q(y | x, a).

A classifier is any :class:`Classifier` subclass that maps a list of
tokenized samples to logits over (positive, neutral, negative).  Each owns
a trainable embedding table copied from the pretrained vectors, separate
from the autoencoder's frozen table.  Subclasses register by name with
:func:`register_classifier` and the harness builds them by that name.
"""
from __future__ import annotations

from typing import Callable, Dict, List, Sequence, Type, Union

import numpy as np

from .autodiff import Tensor, ops
from .data import TokenizedSample, Vocabulary
from .nn import Linear, Module, glorot, param
from .recognition import N_LABELS

NLL_FLOOR = 1e-12

_REGISTRY: Dict[str, Type["Classifier"]] = {}


def register_classifier(name: str) -> Callable[[Type["Classifier"]], Type["Classifier"]]:
    def deco(cls):
        _REGISTRY[name] = cls
        cls.registered_name = name
        return cls
    return deco


def available_classifiers() -> List[str]:
    return sorted(_REGISTRY)


def build_classifier(name: str, vocab: Vocabulary, seed: int = 0, **kwargs) -> "Classifier":
    try:
        cls = _REGISTRY[name]
    except KeyError:
        raise KeyError(f"unknown classifier {name!r}; known: {available_classifiers()}") from None
    return cls(vocab, seed=seed, **kwargs)


class Classifier(Module):
    registered_name = ""

    def __init__(self, vocab: Vocabulary, seed: int = 0):
        self.embedding = param(vocab.vectors.copy())
        self.options: dict = {}

    def logits(self, samples: Sequence[TokenizedSample], rng=None) -> Tensor:
        raise NotImplementedError

    def log_proba(self, samples, rng=None) -> Tensor:
        return ops.log_softmax(self.logits(_as_list(samples), rng))

    def predict_proba(self, samples, rng=None) -> Tensor:
        """Distribution over the three polarities, shape (B, 3)."""
        return ops.softmax(self.logits(_as_list(samples), rng))


def _as_list(samples) -> List[TokenizedSample]:
    if isinstance(samples, TokenizedSample):
        return [samples]
    samples = list(samples)
    if not samples or any(len(s) == 0 for s in samples):
        raise ValueError("classifier input must be non-empty")
    return samples


def _pad(seqs: Sequence[Sequence[int]]):
    t = max(1, max(len(s) for s in seqs))
    ids = np.zeros((len(seqs), t), dtype=np.intp)
    mask = np.zeros((len(seqs), t))
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
        mask[i, : len(s)] = 1.0
    return ids, mask


class GRU(Module):
    """Gated recurrent unit; gates computed as sigmoid through tanh primitives."""

    def __init__(self, rng, d_in: int, hidden: int):
        self.hidden = hidden
        self.input_weight = param(glorot(rng, d_in, 3 * hidden))
        self.recurrent_weight = param(glorot(rng, hidden, 3 * hidden))
        self.bias = param(np.zeros(3 * hidden))

    def __call__(self, x: Tensor, mask: np.ndarray) -> Tensor:
        """Final hidden state of each row; ``mask`` (B, T) freezes padded steps."""
        b, t, _ = x.shape
        hd = self.hidden
        projected = ops.add(ops.matmul(x, self.input_weight), self.bias)
        h = Tensor(np.zeros((b, hd)))
        for step in range(t):
            xs = projected[:, step]
            hs = ops.matmul(h, self.recurrent_weight)
            gates = ops.sigmoid(ops.add(xs[:, : 2 * hd], hs[:, : 2 * hd]))
            reset, update = gates[:, :hd], gates[:, hd:]
            cand = ops.tanh(ops.add(xs[:, 2 * hd:], ops.multiply(reset, hs[:, 2 * hd:])))
            new = ops.add(cand, ops.multiply(update, ops.add(h, ops.scale(cand, -1.0))))
            m = mask[:, step: step + 1]
            if m.all():
                h = new
            else:
                h = ops.add(h, ops.multiply(Tensor(m), ops.add(new, ops.scale(h, -1.0))))
        return h


@register_classifier("tc_recurrent")
class TCRecurrent(Classifier):
    """Target-connected recurrent classifier.

    One GRU reads ``[x_l; a]`` left to right, another reads ``[a; x_r]``
    right to left; their final states are concatenated and mapped to logits.
    """

    def __init__(self, vocab: Vocabulary, seed: int = 0, hidden: int = 64):
        super().__init__(vocab, seed)
        rng = np.random.default_rng(seed)
        self.options = {"hidden": hidden}
        self.left_rnn = GRU(rng, vocab.dim, hidden)
        self.right_rnn = GRU(rng, vocab.dim, hidden)
        self.output = Linear(rng, 2 * hidden, N_LABELS)

    def logits(self, samples, rng=None) -> Tensor:
        samples = _as_list(samples)
        left = [list(s.left_ids) + list(s.aspect_ids) for s in samples]
        right = [list(reversed(list(s.aspect_ids) + list(s.right_ids))) for s in samples]
        lids, lmask = _pad(left)
        rids, rmask = _pad(right)
        hl = self.left_rnn(ops.embedding_lookup(self.embedding, lids), lmask)
        hr = self.right_rnn(ops.embedding_lookup(self.embedding, rids), rmask)
        return self.output(ops.concat([hl, hr], axis=-1))


@register_classifier("memnet")
class MemNet(Classifier):
    """Multi-hop content attention over context word embeddings.

    The query starts as the mean aspect embedding; each hop adds an
    attention summary of the memory to a hop-specific linear map of the
    query.  Rows without context words attend over their aspect words.
    """

    def __init__(self, vocab: Vocabulary, seed: int = 0, hops: int = 3):
        super().__init__(vocab, seed)
        if hops < 0:
            raise ValueError("hops must be non-negative")
        rng = np.random.default_rng(seed)
        d = vocab.dim
        self.options = {"hops": hops}
        self.hops = hops
        self.memory_score = Linear(rng, d, 1, bias=True)
        self.query_score = Linear(rng, d, 1, bias=False)
        self.hop_maps = [Linear(rng, d, d) for _ in range(hops)]
        self.output = Linear(rng, d, N_LABELS)

    def attention(self, memory: Tensor, query: Tensor, allowed: np.ndarray) -> Tensor:
        """Attention weights (B, T) over memory slots."""
        b, t, _ = memory.shape
        scores = ops.add(ops.reshape(self.memory_score(memory), (b, t)), self.query_score(query))
        return ops.softmax(ops.masked_fill(ops.tanh(scores), ~allowed))

    def logits(self, samples, rng=None) -> Tensor:
        samples = _as_list(samples)
        ids, _ = _pad([s.token_ids for s in samples])
        b, t = ids.shape
        aspect = np.zeros((b, t))
        context = np.zeros((b, t), dtype=bool)
        for i, s in enumerate(samples):
            lo, hi = s.aspect_span
            aspect[i, lo:hi] = 1.0 / (hi - lo)
            context[i, : len(s)] = True
            context[i, lo:hi] = False
            if not context[i].any():
                context[i, lo:hi] = True
        memory = ops.embedding_lookup(self.embedding, ids)
        query = ops.reshape(ops.matmul(Tensor(aspect[:, None, :]), memory), (b, -1))
        for hop in self.hop_maps:
            alpha = self.attention(memory, query, context)
            summary = ops.reshape(ops.matmul(ops.reshape(alpha, (b, 1, t)), memory), (b, -1))
            query = ops.add(summary, hop(query))
        return self.output(query)


def classifier_nll(log_q: Tensor, gold) -> Tensor:
    """Per-row -log q(gold), with probabilities floored at 1e-12."""
    gold = np.asarray(gold, dtype=np.intp)
    picked = ops.pick(log_q, gold)
    floor = np.log(NLL_FLOOR)
    if (picked.data < floor).any():
        picked = ops.add(picked, Tensor(np.maximum(floor - picked.data, 0.0)))
    return ops.scale(picked, -1.0)


def nll_floor_hits(log_q: Union[Tensor, np.ndarray], gold) -> int:
    data = log_q.data if isinstance(log_q, Tensor) else np.asarray(log_q)
    picked = np.take_along_axis(data, np.asarray(gold, dtype=np.intp)[:, None], axis=1)[:, 0]
    return int((picked < np.log(NLL_FLOOR)).sum())
