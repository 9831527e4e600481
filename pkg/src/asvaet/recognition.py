"""Inference network q(z | x, a, y): aspect-pooled encoder states to a Gaussian."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .autodiff import Tensor, ops
from .data import TokenizedSample, Vocabulary
from .nn import Linear, Module, param
from .transformer import BlockConfig, TransformerStack, encoder_forward, sinusoidal_encoding

N_LABELS = 3


@dataclass
class EncoderBatch:
    """Right-padded encoder inputs for a list of tokenized samples."""

    ids: np.ndarray        # (B, T) token ids, PAD beyond length
    segments: np.ndarray   # (B, T)
    tags: np.ndarray       # (B, T) signed distance to the aspect
    valid: np.ndarray      # (B, T) bool
    aspect: np.ndarray     # (B, T) bool

    @classmethod
    def build(cls, samples: Sequence[TokenizedSample]) -> "EncoderBatch":
        b = len(samples)
        t = max(len(s) for s in samples)
        ids = np.full((b, t), Vocabulary.PAD, dtype=np.intp)
        segments = np.zeros((b, t), dtype=np.intp)
        tags = np.zeros((b, t), dtype=np.intp)
        valid = np.zeros((b, t), dtype=bool)
        aspect = np.zeros((b, t), dtype=bool)
        for i, s in enumerate(samples):
            n = len(s)
            ids[i, :n] = s.token_ids
            segments[i, :n] = s.segment_ids
            tags[i, :n] = s.position_tags
            valid[i, :n] = True
            lo, hi = s.aspect_span
            aspect[i, lo:hi] = True
        return cls(ids, segments, tags, valid, aspect)

    def __len__(self):
        return self.ids.shape[0]


@dataclass
class GaussianPosterior:
    mu: Tensor
    log_sigma: Tensor
    sigma: Tensor


def one_hot(labels, n: int = N_LABELS) -> np.ndarray:
    labels = np.asarray(labels, dtype=np.intp)
    out = np.zeros(labels.shape + (n,))
    np.put_along_axis(out, labels[..., None], 1.0, axis=-1)
    return out


class RecognitionModel(Module):
    def __init__(self, rng, config: BlockConfig, z_dim: int = 50):
        d = config.d_model
        self.config = config
        self.z_dim = z_dim
        self.segment_embedding = param(rng.normal(0.0, 0.1, size=(2, d)))
        self.encoder = TransformerStack(rng, config)
        self.mu_head = Linear(rng, d + N_LABELS, z_dim)
        self.sigma_head = Linear(rng, d + N_LABELS, z_dim)

    def encode(self, word_inputs: Tensor, batch: EncoderBatch, rng=None) -> Tensor:
        """Encoder hidden states from projected word embeddings (B, T, d_model)."""
        pos = Tensor(sinusoidal_encoding(batch.tags, self.config.d_model))
        seg = ops.embedding_lookup(self.segment_embedding, batch.segments)
        return encoder_forward(self.encoder, ops.add(ops.add(word_inputs, seg), pos), batch.valid, rng)

    @staticmethod
    def pool(hidden: Tensor, aspect: np.ndarray) -> Tensor:
        """Mean of the hidden states over the aspect positions of each row."""
        weights = aspect / aspect.sum(axis=1, keepdims=True)
        return ops.sum(ops.multiply(hidden, Tensor(weights[..., None])), axis=1)

    def posterior_params(self, g: Tensor, y_onehot) -> GaussianPosterior:
        y = y_onehot if isinstance(y_onehot, Tensor) else Tensor(y_onehot)
        gy = ops.concat([g, y], axis=-1)
        mu = ops.tanh(self.mu_head(gy))
        # tanh bounds log sigma, so sigma stays inside (1/e, e)
        log_sigma = ops.tanh(self.sigma_head(gy))
        return GaussianPosterior(mu, log_sigma, ops.exp(log_sigma))


def sample_z(posterior: GaussianPosterior, epsilon) -> Tensor:
    """Reparameterized draw mu + sigma * epsilon with caller-supplied noise."""
    eps = epsilon if isinstance(epsilon, Tensor) else Tensor(epsilon)
    return ops.add(posterior.mu, ops.multiply(posterior.sigma, eps))


def kl_to_prior(posterior: GaussianPosterior) -> Tensor:
    """KL(N(mu, sigma^2) || N(0, I)) summed over the last axis."""
    mu2 = ops.square(posterior.mu)
    s2 = ops.square(posterior.sigma)
    inner = ops.add(ops.add(mu2, s2), ops.scale(posterior.log_sigma, -2.0))
    return ops.scale(ops.add(ops.sum(inner, axis=-1), Tensor(-float(posterior.mu.shape[-1]))), 0.5)
