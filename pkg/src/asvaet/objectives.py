"""Labeled ELBO, label-marginalized unlabeled bound and the joint training loss.

All quantities are natural-log.  The unlabeled bound enumerates the three
labels exactly; no label is ever sampled.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .autodiff import Tensor, ops
from .classifiers import Classifier, classifier_nll
from .data import TokenizedSample
from .generative import DecoderBatch
from .model import ASVAET
from .recognition import N_LABELS, EncoderBatch

UNIFORM_PRIOR = (1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0)


@dataclass(frozen=True)
class ObjectiveWeights:
    kl_weight: float = 1e-4
    gamma: float = 10.0
    label_prior: Tuple[float, float, float] = UNIFORM_PRIOR

    def __post_init__(self):
        if self.kl_weight < 0 or self.gamma < 0:
            raise ValueError("kl_weight and gamma must be non-negative")
        prior = np.asarray(self.label_prior, dtype=np.float64)
        if prior.shape != (N_LABELS,) or (prior <= 0).any() or abs(prior.sum() - 1.0) > 1e-9:
            raise ValueError("label_prior must be a positive distribution over 3 labels")

    @property
    def log_prior(self) -> np.ndarray:
        return np.log(np.asarray(self.label_prior, dtype=np.float64))


@dataclass
class LossBreakdown:
    recon: float = 0.0
    kl: float = 0.0
    log_prior_y: float = 0.0
    entropy: float = 0.0
    clf_nll: float = 0.0
    J: float = 0.0

    def __add__(self, other: "LossBreakdown") -> "LossBreakdown":
        return LossBreakdown(*(a + b for a, b in zip(astuple(self), astuple(other))))

    def to_dict(self) -> dict:
        return asdict(self)


def astuple(b: LossBreakdown):
    return (b.recon, b.kl, b.log_prior_y, b.entropy, b.clf_nll, b.J)


@dataclass
class BatchObjective:
    """Scalar J (a tensor on the tape) plus one breakdown per sample."""

    J: Tensor
    labeled: List[LossBreakdown] = field(default_factory=list)
    unlabeled: List[LossBreakdown] = field(default_factory=list)

    def total(self) -> LossBreakdown:
        out = LossBreakdown()
        for b in (*self.labeled, *self.unlabeled):
            out = out + b
        return out


def _bound(model: ASVAET, g: Tensor, dec: DecoderBatch, rows, labels, epsilon,
           weights: ObjectiveWeights, rng):
    """L(x, a, y) per hypothesis row, with its component tensors."""
    terms = model.elbo_terms(g, dec, rows, labels, epsilon, rng)
    recon = terms.recon.total
    log_prior = Tensor(weights.log_prior[np.asarray(labels, dtype=np.intp)])
    bound = ops.add(ops.add(recon, ops.scale(terms.kl, -weights.kl_weight)), log_prior)
    return bound, recon, terms.kl, log_prior


def labeled_elbo(samples: Sequence[TokenizedSample], labels, epsilon, weights: ObjectiveWeights,
                 model: ASVAET, rng=None) -> Tuple[Tensor, List[LossBreakdown]]:
    """L = recon - kl_weight * KL + log p(y) for each sample, one z draw each."""
    samples = list(samples)
    labels = np.asarray(labels, dtype=np.intp)
    g = model.encode(EncoderBatch.build(samples), rng)
    dec = DecoderBatch.build(samples, model.space)
    bound, recon, kl, lp = _bound(model, g, dec, np.arange(len(samples)), labels,
                                  np.asarray(epsilon), weights, rng)
    rows = [LossBreakdown(recon=r, kl=k, log_prior_y=p, J=-b)
            for r, k, p, b in zip(recon.data, kl.data, lp.data, bound.data)]
    return bound, rows


def entropy(log_q: Tensor) -> Tensor:
    """Per-row entropy -sum q log q from log-probabilities; 0 log 0 counts as 0."""
    q = ops.exp(log_q)
    safe = ops.masked_fill(log_q, q.data == 0.0, 0.0)
    return ops.scale(ops.sum(ops.multiply(q, safe), axis=-1), -1.0)


def _check_distribution(log_q: Tensor):
    total = np.exp(log_q.data).sum(axis=-1)
    if np.abs(total - 1.0).max() > 1e-6:
        raise ValueError("label distribution must sum to 1")


def _unlabeled_from_encoding(model, g, dec, base_rows, log_q: Tensor, epsilon, weights, rng):
    """U per sample for samples whose pooled context sits at ``g[base_rows]``."""
    _check_distribution(log_q)
    b = len(base_rows)
    rows = np.repeat(np.asarray(base_rows, dtype=np.intp), N_LABELS)
    labels = np.tile(np.arange(N_LABELS), b)
    eps = np.asarray(epsilon, dtype=np.float64)
    if eps.ndim == 2:
        eps = np.repeat(eps, N_LABELS, axis=0)
    else:
        eps = eps.reshape(b * N_LABELS, -1)
    bound, recon, kl, lp = _bound(model, g, dec.repeat(N_LABELS), rows, labels, eps, weights, rng)
    q = ops.exp(log_q)
    per_label = ops.reshape(bound, (b, N_LABELS))
    ent = entropy(log_q)
    u = ops.add(ops.sum(ops.multiply(q, per_label), axis=-1), ent)
    qd = q.data
    breakdowns = []
    for i in range(b):
        sl = slice(i * N_LABELS, (i + 1) * N_LABELS)
        breakdowns.append(LossBreakdown(
            recon=float(qd[i] @ recon.data[sl]), kl=float(qd[i] @ kl.data[sl]),
            log_prior_y=float(qd[i] @ lp.data[sl]), entropy=float(ent.data[i]),
            J=-float(u.data[i])))
    return u, breakdowns


def unlabeled_objective(samples: Sequence[TokenizedSample], epsilon, weights: ObjectiveWeights,
                        model: ASVAET, classifier=None, log_q: Optional[Tensor] = None,
                        rng=None) -> Tuple[Tensor, List[LossBreakdown]]:
    """U = sum_y q(y|x,a) L(x,a,y) + H(q) per sample.

    ``epsilon`` is (B, z_dim) to share one draw across the three labels or
    (B, 3, z_dim) for per-label draws.  ``log_q`` overrides the classifier.
    """
    samples = list(samples)
    if log_q is None:
        log_q = classifier.log_proba(samples, rng)
    g = model.encode(EncoderBatch.build(samples), rng)
    dec = DecoderBatch.build(samples, model.space)
    return _unlabeled_from_encoding(model, g, dec, np.arange(len(samples)), log_q, epsilon,
                                    weights, rng)


def joint_objective(labeled: Sequence[TokenizedSample], unlabeled: Sequence[TokenizedSample],
                    weights: ObjectiveWeights, model: ASVAET, classifier: Classifier,
                    eps_labeled, eps_unlabeled, rng=None, clf_rng=None) -> BatchObjective:
    """J = sum_l [-L + gamma * -log q(y)] + sum_u [-U], one pass per network."""
    labeled, unlabeled = list(labeled), list(unlabeled)
    if not labeled and not unlabeled:
        raise ValueError("joint objective needs at least one sample")
    nl, nu = len(labeled), len(unlabeled)
    samples = labeled + unlabeled
    log_q = classifier.log_proba(samples, clf_rng)
    g = model.encode(EncoderBatch.build(samples), rng)
    parts: List[Tensor] = []
    result_l: List[LossBreakdown] = []
    result_u: List[LossBreakdown] = []

    if nl:
        gold = np.array([int(s.label) for s in labeled], dtype=np.intp)
        dec = DecoderBatch.build(labeled, model.space)
        bound, recon, kl, lp = _bound(model, g, dec, np.arange(nl), gold,
                                      np.asarray(eps_labeled), weights, rng)
        nll = classifier_nll(log_q[:nl], gold)
        contrib = ops.add(ops.scale(bound, -1.0), ops.scale(nll, weights.gamma))
        parts.append(ops.sum(contrib))
        for i in range(nl):
            result_l.append(LossBreakdown(recon=float(recon.data[i]), kl=float(kl.data[i]),
                                          log_prior_y=float(lp.data[i]), clf_nll=float(nll.data[i]),
                                          J=float(contrib.data[i])))
    if nu:
        dec = DecoderBatch.build(unlabeled, model.space)
        u, result_u = _unlabeled_from_encoding(model, g, dec, np.arange(nl, nl + nu),
                                               log_q[nl:], eps_unlabeled, weights, rng)
        parts.append(ops.scale(ops.sum(u), -1.0))
    J = parts[0] if len(parts) == 1 else ops.add(parts[0], parts[1])
    return BatchObjective(J, result_l, result_u)
