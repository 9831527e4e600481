"""Shared builders for small deterministic test instances."""
from __future__ import annotations

from typing import List, Optional

import numpy as np

from asvaet.data import (LabeledSample, Polarity, UnlabeledSample, Vocabulary,
                         tokenize_and_align)
from asvaet.model import ASVAET, ModelConfig

TINY = ModelConfig(d_model=8, n_layers=2, n_heads=2, d_ff=16, dropout=0.0, z_dim=4)

# acceptance lines collected for the terminal summary
ACCEPTANCE: List[str] = []


def record(criterion: str, passed: bool, detail: str) -> bool:
    ACCEPTANCE.append(f"{'PASS' if passed else 'FAIL'}  {criterion}: {detail}")
    return passed


def word_vocab(n_words: int = 12, dim: int = 4, seed: int = 0) -> Vocabulary:
    rng = np.random.default_rng(seed)
    return Vocabulary([f"w{i}" for i in range(n_words)], rng.normal(size=(n_words, dim)))


def from_tokens(tokens, k: int, la: int, label: Optional[int] = None):
    """Sample whose aspect is tokens[k:k+la], with character offsets computed."""
    text = " ".join(tokens)
    start = len(" ".join(tokens[:k])) + (1 if k else 0)
    end = start + len(" ".join(tokens[k:k + la]))
    if label is None:
        return UnlabeledSample(text, start, end)
    return LabeledSample(text, start, end, Polarity(label))


def tokenized(vocab: Vocabulary, tokens, k: int, la: int, label: Optional[int] = None):
    return tokenize_and_align(from_tokens(tokens, k, la, label), vocab)


def random_tokenized(rng, vocab: Vocabulary, n: int, min_len: int = 1, max_len: int = 6,
                     labeled: bool = True):
    words = [t for t in vocab.tokens[2:]]
    out = []
    for _ in range(n):
        length = int(rng.integers(min_len, max_len + 1))
        toks = [words[i] for i in rng.integers(len(words), size=length)]
        la = int(rng.integers(1, length + 1))
        k = int(rng.integers(0, length - la + 1))
        label = int(rng.integers(3)) if labeled else None
        out.append(tokenized(vocab, toks, k, la, label))
    return out


def tiny_model(vocab: Vocabulary, seed: int = 1, **overrides) -> ASVAET:
    cfg = ModelConfig(**{**TINY.to_dict(), **overrides})
    return ASVAET(vocab, cfg, seed=seed)


def synthetic_corpora(seed: int = 0, n_labeled: int = 30, n_unlabeled: int = 40, n_test: int = 30,
                      dim: int = 8):
    """In-memory Corpora over the synthetic review generator."""
    from asvaet.data import synthesize_corpus, synthetic_word_vectors
    from asvaet.harness.training import Corpora, tokenize_all

    corpus = synthesize_corpus(seed, n_labeled, n_unlabeled, n_test)
    vocab = synthetic_word_vectors(corpus.spec, dim, seed)
    return Corpora(vocab, tokenize_all(corpus.labeled, vocab, 80), tokenize_all(corpus.unlabeled, vocab, 80),
                   tokenize_all(corpus.held_out, vocab, 80)), corpus


def small_config(tmp_path, **overrides):
    from asvaet.harness.config import TrainConfig

    base = dict(output_dir=str(tmp_path / "run"), d_model=8, n_layers=1, n_heads=2, z_dim=4, dropout=0.0,
                batch_labeled=8, batch_unlabeled=8, epochs=2, steps_per_epoch=2, seed=0,
                classifier_options={"hops": 1})
    base.update(overrides)
    return TrainConfig(**base)
