"""The autoencoder: frozen word table, recognition and generative networks."""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .autodiff import Tensor, no_grad, ops
from .data import TokenizedSample, Vocabulary
from .generative import DecoderBatch, GenerativeModel, ReconstructionLogLik, TokenSpace
from .nn import Linear, Module
from .recognition import (EncoderBatch, GaussianPosterior, RecognitionModel, kl_to_prior,
                          one_hot, sample_z)
from .transformer import BlockConfig


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 100
    n_layers: int = 2
    n_heads: int = 8
    d_ff: Optional[int] = None
    dropout: float = 0.1
    z_dim: int = 50

    def block(self) -> BlockConfig:
        return BlockConfig(self.d_model, self.n_layers, self.n_heads, self.d_ff, self.dropout)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class ELBOTerms:
    recon: ReconstructionLogLik
    kl: Tensor
    posterior: GaussianPosterior
    z: Tensor


class ASVAET(Module):
    """Encoder, posterior heads and decoders sharing one frozen word table."""

    def __init__(self, vocab: Vocabulary, config: ModelConfig = ModelConfig(), seed: int = 0):
        rng = np.random.default_rng(seed)
        self.config = config
        self.space = TokenSpace(len(vocab))
        table = np.zeros((self.space.size, vocab.dim))
        table[: len(vocab)] = vocab.vectors
        # frozen: requires_grad stays False so no optimizer ever sees it
        self.word_table = Tensor(table, requires_grad=False, name="word_table")
        self.word_projection = Linear(rng, vocab.dim, config.d_model, bias=False)
        block = config.block()
        self.recognition = RecognitionModel(rng, block, config.z_dim)
        self.generative = GenerativeModel(rng, block, self.space.size, config.z_dim)

    def embed(self, ids) -> Tensor:
        return self.word_projection(ops.embedding_lookup(self.word_table, ids))

    def encode(self, batch: EncoderBatch, rng=None) -> Tensor:
        """Aspect-pooled encoder output g, shape (B, d_model)."""
        hidden = self.recognition.encode(self.embed(batch.ids), batch, rng)
        return self.recognition.pool(hidden, batch.aspect)

    def elbo_terms(self, g: Tensor, decoder_batch: DecoderBatch, sample_rows, labels, epsilon,
                   rng=None) -> ELBOTerms:
        """Posterior, reparameterized z and reconstruction for each hypothesis row.

        Row r pairs pooled context ``g[sample_rows[r]]`` with label ``labels[r]``;
        ``decoder_batch`` must already be laid out one row per hypothesis.
        """
        rows = np.asarray(sample_rows, dtype=np.intp)
        labels = np.asarray(labels, dtype=np.intp)
        g_rows = ops.embedding_lookup(g, rows)
        posterior = self.recognition.posterior_params(g_rows, one_hot(labels))
        z = sample_z(posterior, epsilon)
        recon = self.generative.reconstruction_loglik(decoder_batch, self.embed, labels, z, rng)
        return ELBOTerms(recon, kl_to_prior(posterior), posterior, z)

    def posterior_mean(self, samples: Sequence[TokenizedSample], labels) -> np.ndarray:
        """mu of q(z | x, a, y) for each sample (the epsilon = 0 draw)."""
        with no_grad():
            g = self.encode(EncoderBatch.build(samples))
            post = self.recognition.posterior_params(g, one_hot(labels))
        return post.mu.data.copy()
