"""Training modes, evaluation, latent export and controlled generation."""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

from .. import __version__
from ..autodiff import BACKEND, Tape, Tensor, backward, no_grad, ops
from ..classifiers import NLL_FLOOR, Classifier, build_classifier, classifier_nll
from ..data import (LabeledSample, Polarity, TokenizedSample, UnlabeledSample, Vocabulary,
                    load_jsonl, load_word_vectors, tokenize_and_align)
from ..generative import generate
from ..model import ASVAET
from ..objectives import LossBreakdown, ObjectiveWeights, joint_objective
from .checkpoint import load_checkpoint, save_checkpoint
from .config import ConfigError, TrainConfig
from .metrics import MetricsReport, compute_metrics
from .optim import Adam

log = logging.getLogger(__name__)

BREAKDOWN_FIELDS = ("recon", "kl", "log_prior_y", "entropy", "clf_nll", "J")


class NumericalError(FloatingPointError):
    pass


@dataclass
class Corpora:
    vocab: Vocabulary
    labeled: List[TokenizedSample]
    unlabeled: List[TokenizedSample]
    test: List[TokenizedSample]
    checksums: Dict[str, str] = field(default_factory=dict)


@dataclass
class RunArtifacts:
    output_dir: Path
    checkpoint: Path
    final_checkpoint: Path
    metrics: Path
    manifest: Path
    best: dict
    history: List[dict]


@dataclass
class TrainedRun:
    config: TrainConfig
    vocab: Vocabulary
    classifier: Classifier
    model: Optional[ASVAET]
    header: dict


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def tokenize_all(samples, vocab: Vocabulary, max_len: int) -> List[TokenizedSample]:
    return [tokenize_and_align(s, vocab, max_len) for s in samples]


def load_corpora(config: TrainConfig) -> Corpora:
    if not config.labeled_path or not config.test_path or not config.vectors_path:
        raise ConfigError("labeled_path, test_path and vectors_path are required")
    if config.vectors_dim is None:
        raise ConfigError("vectors_dim is required")
    if config.mode in ("asvaet", "self_training") and not config.unlabeled_path:
        raise ConfigError(f"mode {config.mode} needs unlabeled_path")
    vocab = load_word_vectors(config.vectors_path, config.vectors_dim)
    labeled = load_jsonl(config.labeled_path)
    test = load_jsonl(config.test_path)
    for name, rows in (("labeled", labeled), ("test", test)):
        if any(not isinstance(s, LabeledSample) for s in rows):
            raise ConfigError(f"{name} corpus contains samples without labels")
    unlabeled = []
    checksums = {p: _sha256(p) for p in (config.vectors_path, config.labeled_path, config.test_path)}
    if config.unlabeled_path and config.mode != "supervised":
        # any labels present in the unlabeled file are discarded here
        unlabeled = [UnlabeledSample(s.text, s.aspect_start, s.aspect_end)
                     for s in load_jsonl(config.unlabeled_path)]
        checksums[config.unlabeled_path] = _sha256(config.unlabeled_path)
    return Corpora(vocab, tokenize_all(labeled, vocab, config.max_len),
                   tokenize_all(unlabeled, vocab, config.max_len),
                   tokenize_all(test, vocab, config.max_len), checksums)


class _Batches:
    """Endless stream of index batches over reshuffled permutations."""

    def __init__(self, n: int, batch: int, rng: np.random.Generator):
        self.n, self.batch, self.rng = n, batch, rng
        self._queue = np.empty(0, dtype=np.intp)

    def next(self) -> np.ndarray:
        size = min(self.batch, self.n)
        while self._queue.size < size:
            self._queue = np.concatenate([self._queue, self.rng.permutation(self.n)])
        out, self._queue = self._queue[:size], self._queue[size:]
        return out


def predict(classifier: Classifier, samples: Sequence[TokenizedSample], batch: int = 256):
    """Argmax labels and probabilities, computed without recording a tape."""
    probs = []
    with no_grad():
        for i in range(0, len(samples), batch):
            probs.append(classifier.predict_proba(samples[i:i + batch]).data)
    probs = np.concatenate(probs) if probs else np.zeros((0, 3))
    return probs.argmax(axis=1), probs


def evaluate_classifier(classifier: Classifier, samples: Sequence[TokenizedSample]) -> MetricsReport:
    if not samples:
        raise ValueError("cannot evaluate an empty test set")
    pred, _ = predict(classifier, samples)
    return compute_metrics([int(s.label) for s in samples], pred)


def _label_prior(config: TrainConfig, labeled: Sequence[TokenizedSample]):
    if config.label_prior == "uniform":
        return (1 / 3, 1 / 3, 1 / 3)
    counts = np.bincount([int(s.label) for s in labeled], minlength=3) + 1.0
    return tuple(float(c) for c in counts / counts.sum())


def _frozen_checksum(model: Optional[ASVAET]) -> Optional[str]:
    if model is None:
        return None
    return hashlib.sha256(model.word_table.data.tobytes()).hexdigest()


class Trainer:
    def __init__(self, config: TrainConfig, corpora: Corpora):
        self.config = config
        self.corpora = corpora
        seeds = np.random.SeedSequence(config.seed).spawn(3)
        self.data_rng = np.random.default_rng(seeds[0])
        self.noise_rng = np.random.default_rng(seeds[1])
        self.dropout_rng = np.random.default_rng(seeds[2])
        self.classifier = build_classifier(config.classifier, corpora.vocab, seed=config.seed + 1,
                                           **config.classifier_options)
        self.model = None
        if config.mode == "asvaet":
            self.model = ASVAET(corpora.vocab, config.model_config(), seed=config.seed)
        params = self.classifier.parameters() + (self.model.parameters() if self.model else [])
        self.optimizer = Adam(params, config.learning_rate, config.beta1, config.beta2, config.adam_eps)
        self.weights = ObjectiveWeights(config.kl_weight, config.gamma,
                                        _label_prior(config, corpora.labeled))
        self.history: List[dict] = []
        self.best: Optional[dict] = None
        self.best_state = None
        self.global_step = 0
        self.epoch = 0

    # steps

    def _kl_weight(self) -> float:
        if self.config.kl_anneal_steps <= 0:
            return self.config.kl_weight
        return self.config.kl_weight * min(1.0, self.global_step / self.config.kl_anneal_steps)

    def _supervised_step(self, labeled, idx):
        batch = [labeled[i] for i in idx]
        with Tape():
            log_q = self.classifier.log_proba(batch)
            nll = classifier_nll(log_q, [int(s.label) for s in batch])
            loss = ops.sum(nll)
            self._check(loss, idx, [])
            backward(loss)
        self.optimizer.step()
        self.optimizer.zero_grad()
        total = float(loss.data)
        return [LossBreakdown(clf_nll=float(v), J=float(v)) for v in nll.data], total

    def _asvaet_step(self, labeled, unlabeled, lidx, uidx):
        lb = [labeled[i] for i in lidx]
        ub = [unlabeled[i] for i in uidx]
        z = self.config.z_dim
        eps_l = self.noise_rng.standard_normal((len(lb), z))
        shape = (len(ub), 3, z) if self.config.per_label_noise else (len(ub), z)
        eps_u = self.noise_rng.standard_normal(shape)
        weights = replace(self.weights, kl_weight=self._kl_weight())
        with Tape():
            obj = joint_objective(lb, ub, weights, self.model, self.classifier, eps_l, eps_u,
                                  rng=self.dropout_rng)
            self._check(obj.J, lidx, uidx)
            backward(obj.J)
        self.optimizer.step()
        self.optimizer.zero_grad()
        return obj.labeled + obj.unlabeled, float(obj.J.data)

    @staticmethod
    def _check(loss: Tensor, lidx, uidx):
        if not np.isfinite(loss.data).all():
            raise NumericalError(
                f"non-finite loss; labeled batch ids {list(map(int, lidx))}, "
                f"unlabeled batch ids {list(map(int, uidx))}")

    # epochs

    def _steps_per_epoch(self, n_labeled: int, n_unlabeled: int) -> int:
        if self.config.steps_per_epoch:
            return self.config.steps_per_epoch
        if self.config.mode == "asvaet" and n_unlabeled:
            return math.ceil(n_unlabeled / self.config.batch_unlabeled)
        return max(1, math.ceil(n_labeled / self.config.batch_labeled))

    def run_epochs(self, labeled, unlabeled, epochs: int, writer, extra: Optional[dict] = None) -> bool:
        """Train for up to ``epochs`` epochs; returns False once patience runs out."""
        cfg = self.config
        lbatches = _Batches(len(labeled), cfg.batch_labeled, self.data_rng) if labeled else None
        ubatches = _Batches(len(unlabeled), cfg.batch_unlabeled, self.data_rng) if unlabeled else None
        n_steps = self._steps_per_epoch(len(labeled), len(unlabeled))
        for _ in range(epochs):
            self.epoch += 1
            sums = LossBreakdown()
            n_samples, j_total, floor_hits = 0, 0.0, 0
            for _ in range(n_steps):
                lidx = lbatches.next() if lbatches else np.empty(0, dtype=np.intp)
                if self.model is not None:
                    uidx = ubatches.next() if ubatches else np.empty(0, dtype=np.intp)
                    rows, j = self._asvaet_step(labeled, unlabeled, lidx, uidx)
                else:
                    rows, j = self._supervised_step(labeled, lidx)
                self.global_step += 1
                for r in rows:
                    sums = sums + r
                    # labeled rows whose gold probability fell below the clamp
                    floor_hits += r.clf_nll >= -math.log(NLL_FLOOR)
                n_samples += len(rows)
                j_total += j
            report = evaluate_classifier(self.classifier, self.corpora.test)
            line = {"epoch": self.epoch, "mode": cfg.mode, "steps": self.global_step}
            means = sums.to_dict()
            for key in BREAKDOWN_FIELDS:
                means[key] = means[key] / max(n_samples, 1)
            means["J"] = j_total / n_steps
            line.update(means)
            line["nll_floor_hits"] = floor_hits
            line.update({"accuracy": report.accuracy, "macro_f1": report.macro_f1, "f1": report.f1})
            if self.model is not None:
                line["frozen_table_sha256"] = _frozen_checksum(self.model)
            if extra:
                line.update(extra)
            writer(line)
            self.history.append(line)
            log.info("epoch %d J=%.4f acc=%.4f f1=%.4f", self.epoch, means["J"], report.accuracy,
                     report.macro_f1)
            if self.best is None or report.accuracy > self.best["accuracy"]:
                self.best = {"epoch": self.epoch, **report.to_dict()}
                self.best_state = self._snapshot()
            elif self.epoch - self.best["epoch"] >= cfg.patience:
                return False
        return True

    def _snapshot(self):
        return (self.classifier.state_dict(), self.model.state_dict() if self.model else None)

    def restore_best(self):
        clf_state, model_state = self.best_state
        self.classifier.load_state_dict(clf_state)
        if self.model is not None:
            self.model.load_state_dict(model_state)

    def self_training(self, writer):
        cfg = self.config
        labeled = list(self.corpora.labeled)
        pool = list(self.corpora.unlabeled)
        chunk = max(1, min(cfg.self_training_chunk, math.ceil(len(pool) / 10)))
        self.run_epochs(labeled, [], cfg.self_training_epochs, writer, {"loop": 0})
        loop = 0
        while pool:
            loop += 1
            _, probs = predict(self.classifier, pool)
            conf = probs.max(axis=1)
            order = np.argsort(-conf, kind="stable")
            take = set(order[:chunk].tolist())
            for i in sorted(take):
                labeled.append(replace(pool[i], label=Polarity(int(probs[i].argmax()))))
            pool = [s for i, s in enumerate(pool) if i not in take]
            self.run_epochs(labeled, [], cfg.self_training_epochs, writer,
                            {"loop": loop, "pseudo_labeled": len(take), "pool_remaining": len(pool)})
        return loop


def _writer(path: Path):
    fh = open(path, "w", encoding="utf-8")

    def write(line: dict):
        fh.write(json.dumps(line, sort_keys=True) + "\n")
        fh.flush()

    return fh, write


def checkpoint_tensors(run: TrainedRun) -> Dict[str, np.ndarray]:
    tensors = {"vocab.vectors": run.vocab.vectors}
    tensors.update({f"classifier.{k}": v for k, v in run.classifier.state_dict().items()})
    if run.model is not None:
        tensors.update({f"model.{k}": v for k, v in run.model.state_dict().items()})
    return tensors


def save_run(path, run: TrainedRun) -> None:
    meta = dict(run.header)
    meta.update({
        "config": run.config.to_dict(),
        "vocab_tokens": run.vocab.tokens,
        "classifier": run.config.classifier,
        "classifier_options": run.classifier.options,
        "has_autoencoder": run.model is not None,
    })
    save_checkpoint(path, checkpoint_tensors(run), meta)


def load_run(path) -> TrainedRun:
    tensors, header = load_checkpoint(path)
    config = TrainConfig.from_dict(header["config"])
    vocab = Vocabulary.from_table(header["vocab_tokens"], tensors["vocab.vectors"])
    clf = build_classifier(header["classifier"], vocab, seed=0, **header["classifier_options"])
    clf.load_state_dict({k[len("classifier."):]: v for k, v in tensors.items()
                         if k.startswith("classifier.")})
    model = None
    if header.get("has_autoencoder"):
        model = ASVAET(vocab, config.model_config(), seed=0)
        model.load_state_dict({k[len("model."):]: v for k, v in tensors.items()
                               if k.startswith("model.")})
    return TrainedRun(config, vocab, clf, model, header)


def train(config: TrainConfig, corpora: Optional[Corpora] = None) -> RunArtifacts:
    """Train in the configured mode and write checkpoint, metrics JSONL and manifest."""
    corpora = corpora or load_corpora(config)
    if not corpora.labeled:
        raise ConfigError("no labeled training samples")
    if not corpora.test:
        raise ConfigError("no held-out samples")
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"checkpoint": out / "checkpoint.bin", "final": out / "final.bin",
             "metrics": out / "metrics.jsonl",
             "manifest": out / "manifest.json"}
    manifest = {
        "config": config.to_dict(),
        "overrides": config.overridden(),
        "seed": config.seed,
        "corpus_checksums": corpora.checksums,
        "vocab_checksum": corpora.vocab.checksum(),
        "code_version": __version__,
        "kernel_backend": BACKEND,
        "n_labeled": len(corpora.labeled),
        "n_unlabeled": len(corpora.unlabeled),
        "n_test": len(corpora.test),
    }
    paths["manifest"].write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    trainer = Trainer(config, corpora)
    fh, write = _writer(paths["metrics"])
    try:
        if config.mode == "self_training":
            trainer.self_training(write)
        else:
            trainer.run_epochs(corpora.labeled, corpora.unlabeled, config.epochs, write)
    finally:
        fh.close()
    run = TrainedRun(config, corpora.vocab, trainer.classifier, trainer.model,
                     {"mode": config.mode, "epoch": trainer.epoch, "best": trainer.best})
    # the last state is kept too: the autoencoder usually trains well past the best classifier epoch
    save_run(paths["final"], run)
    trainer.restore_best()
    run.header = {"mode": config.mode, "epoch": trainer.best["epoch"], "best": trainer.best}
    save_run(paths["checkpoint"], run)
    return RunArtifacts(out, paths["checkpoint"], paths["final"], paths["metrics"],
                        paths["manifest"], trainer.best, trainer.history)


def evaluate(checkpoint, samples) -> MetricsReport:
    """Reload a checkpoint and score its classifier on labeled samples or a JSONL path."""
    run = load_run(checkpoint)
    if isinstance(samples, (str, Path)):
        samples = load_jsonl(samples)
    tok = [s if isinstance(s, TokenizedSample) else tokenize_and_align(s, run.vocab, run.config.max_len)
           for s in samples]
    return evaluate_classifier(run.classifier, tok)


def export_latent(checkpoint, samples, out_path) -> int:
    """CSV of posterior means (epsilon = 0) given the classifier's predicted label.

    Columns: z_0 .. z_{k-1}, gold, pred; gold is blank for unlabeled rows.
    Returns the number of data rows written.
    """
    run = checkpoint if isinstance(checkpoint, TrainedRun) else load_run(checkpoint)
    if run.model is None:
        raise ConfigError("checkpoint has no autoencoder (train with mode asvaet)")
    if isinstance(samples, (str, Path)):
        samples = load_jsonl(samples)
    tok = [s if isinstance(s, TokenizedSample) else tokenize_and_align(s, run.vocab, run.config.max_len)
           for s in samples]
    pred, _ = predict(run.classifier, tok) if tok else (np.zeros(0, dtype=np.intp), None)
    rows = []
    for i in range(0, len(tok), 256):
        rows.append(run.model.posterior_mean(tok[i:i + 256], pred[i:i + 256]))
    mu = np.concatenate(rows) if rows else np.zeros((0, run.config.z_dim))
    k = run.config.z_dim
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(",".join([f"z_{i}" for i in range(k)] + ["gold", "pred"]) + "\n")
        for s, m, p in zip(tok, mu, pred):
            gold = s.label.label if s.label is not None else ""
            fh.write(",".join([repr(float(v)) for v in m] + [gold, Polarity(int(p)).label]) + "\n")
    return len(tok)


def generate_sentences(run: TrainedRun, aspect: str, label, n: int = 1, mode: str = "greedy",
                       seed: int = 0, temperature: float = 1.0, max_steps: int = 20,
                       z=None) -> List[str]:
    """Sentences around ``aspect`` under polarity ``label``; z from the prior unless given."""
    if run.model is None:
        raise ConfigError("checkpoint has no autoencoder (train with mode asvaet)")
    label = Polarity.parse(label) if isinstance(label, str) else Polarity(label)
    tokens = aspect.lower().split()
    if not tokens:
        raise ValueError("aspect phrase is empty")
    ids = [run.vocab.lookup(t) for t in tokens]
    rng = np.random.default_rng(seed)
    space = run.model.space
    names = run.vocab.tokens
    out = []
    for _ in range(n):
        zi = np.asarray(z, dtype=np.float64) if z is not None else rng.standard_normal(run.config.z_dim)
        left, right = generate(run.model.generative, space, run.model.embed, int(label), zi, ids,
                               max_steps=max_steps, mode=mode, temperature=temperature, rng=rng,
                               banned=[Vocabulary.PAD, Vocabulary.UNK])
        out.append(" ".join([names[i] for i in left] + tokens + [names[i] for i in right]))
    return out
