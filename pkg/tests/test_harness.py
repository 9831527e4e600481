import csv
import json
import math

import numpy as np
import pytest

from asvaet.autodiff import Tensor
from asvaet.data import Polarity, dump_jsonl, save_word_vectors, synthesize_corpus, synthetic_word_vectors
from asvaet.harness import (CheckpointError, ConfigError, NumericalError, TrainConfig, compute_metrics,
                            evaluate, evaluate_classifier, export_latent, generate_sentences,
                            load_checkpoint, load_corpora, load_run, save_checkpoint, train)
from asvaet.harness import training as training_mod
from asvaet.harness.optim import Adam
from asvaet.harness.training import Trainer

from helpers import small_config, synthetic_corpora

P, O, N = int(Polarity.POSITIVE), int(Polarity.NEUTRAL), int(Polarity.NEGATIVE)


# -- metrics ---------------------------------------------------------------------------

def test_hand_confusion_example():
    gold = [P, P, P, N, O]
    pred = [P, P, N, N, O]
    r = compute_metrics(gold, pred)
    assert r.accuracy == pytest.approx(0.8, abs=1e-15)
    assert r.f1 == pytest.approx({"positive": 0.8, "neutral": 1.0, "negative": 2 / 3}, abs=1e-12)
    assert abs(r.macro_f1 - 0.8222) < 1e-4
    assert r.confusion[P] == [2, 0, 1]


def test_perfect_prediction():
    r = compute_metrics([0, 1, 2, 2], [0, 1, 2, 2])
    assert r.accuracy == 1.0 and r.macro_f1 == 1.0 and r.absent_classes == []


def test_absent_class_flagged():
    r = compute_metrics([0, 0, 2], [0, 0, 2])
    assert r.f1["neutral"] == 0.0 and r.absent_classes == ["neutral"]
    assert r.macro_f1 == pytest.approx(2 / 3)


def test_metrics_reject_empty_and_mismatched():
    with pytest.raises(ValueError):
        compute_metrics([], [])
    with pytest.raises(ValueError):
        compute_metrics([0, 1], [0])


# -- configuration -------------------------------------------------------------------------

def test_config_defaults():
    c = TrainConfig()
    assert (c.d_model, c.n_layers, c.n_heads, c.z_dim) == (100, 2, 8, 50)
    assert (c.kl_weight, c.gamma, c.max_len) == (1e-4, 10.0, 80)
    assert (c.learning_rate, c.beta1, c.beta2, c.adam_eps) == (1e-3, 0.9, 0.999, 1e-8)
    assert (c.batch_labeled, c.batch_unlabeled, c.self_training_chunk) == (32, 32, 1000)


def test_config_file_and_overrides(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"mode": "supervised", "seed": 4, "epochs": 3}))
    c = TrainConfig.load(p, seed=9, classifier=None)
    assert c.mode == "supervised" and c.seed == 9 and c.classifier == "memnet"
    assert c.overridden() == {"mode": "supervised", "seed": 9, "epochs": 3}


@pytest.mark.parametrize("data", [{"mode": "magic"}, {"bogus": 1}, {"d_model": 0}, {"kl_weight": -1}])
def test_bad_config_rejected(data):
    with pytest.raises(ConfigError):
        TrainConfig.from_dict(data)


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError):
        TrainConfig.load(tmp_path / "missing.json")


def test_unlabeled_path_required(tmp_path):
    cfg = TrainConfig(labeled_path="a", test_path="b", vectors_path="c", vectors_dim=4, mode="asvaet")
    with pytest.raises(ConfigError, match="unlabeled_path"):
        load_corpora(cfg)


def test_load_corpora_discards_unlabeled_labels(tmp_path):
    corpus = synthesize_corpus(0, 6, 5, 6)
    vocab = synthetic_word_vectors(corpus.spec, 4)
    save_word_vectors(vocab, tmp_path / "v.txt")
    dump_jsonl(corpus.labeled, tmp_path / "l.jsonl")
    dump_jsonl(corpus.held_out, tmp_path / "t.jsonl")
    # a labeled file passed as the unlabeled pool
    dump_jsonl(corpus.labeled, tmp_path / "u.jsonl")
    cfg = TrainConfig(labeled_path=str(tmp_path / "l.jsonl"), test_path=str(tmp_path / "t.jsonl"),
                      unlabeled_path=str(tmp_path / "u.jsonl"), vectors_path=str(tmp_path / "v.txt"),
                      vectors_dim=4)
    c = load_corpora(cfg)
    assert len(c.unlabeled) == 6 and all(s.label is None for s in c.unlabeled)
    assert len(c.checksums) == 4


# -- optimizer ------------------------------------------------------------------------------

def test_adam_first_step_is_learning_rate():
    w = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    w.grad = np.array([0.5, -3.0])
    Adam([w], lr=0.1).step()
    np.testing.assert_allclose(w.data, [0.9, -1.9], atol=1e-9)


# -- checkpoints ----------------------------------------------------------------------------

def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {"a": rng.normal(size=(2, 3)), "b": rng.normal(size=4), "c": np.array(1.5)}
    save_checkpoint(tmp_path / "x.bin", tensors, {"note": "hi"})
    back, meta = load_checkpoint(tmp_path / "x.bin")
    assert meta["note"] == "hi" and list(back) == ["a", "b", "c"]
    for k in tensors:
        np.testing.assert_array_equal(back[k], tensors[k])


def test_checkpoint_bad_magic(tmp_path):
    (tmp_path / "bad.bin").write_bytes(b"NOTACKPT" + b"\0" * 16)
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "bad.bin")


# -- training runs -----------------------------------------------------------------------------

@pytest.fixture(scope="module")
def corpora():
    return synthetic_corpora(0, 24, 30, 18)[0]


@pytest.fixture(scope="module")
def asvaet_run(tmp_path_factory, corpora):
    cfg = small_config(tmp_path_factory.mktemp("asvaet"), epochs=3)
    return cfg, train(cfg, corpora)


def test_run_artifacts(asvaet_run):
    cfg, art = asvaet_run
    lines = [json.loads(x) for x in art.metrics.read_text().splitlines()]
    assert [x["epoch"] for x in lines] == [1, 2, 3]
    for key in ("recon", "kl", "log_prior_y", "entropy", "clf_nll", "J", "accuracy", "macro_f1"):
        assert all(math.isfinite(x[key]) for x in lines)
    manifest = json.loads(art.manifest.read_text())
    for key in ("config", "overrides", "seed", "corpus_checksums", "code_version", "kernel_backend"):
        assert key in manifest
    assert manifest["config"]["kl_weight"] == cfg.kl_weight
    assert manifest["overrides"]["d_model"] == 8
    assert art.checkpoint.exists() and art.final_checkpoint.exists()


def test_frozen_table_checksum_constant(asvaet_run):
    _, art = asvaet_run
    sums = {json.loads(x)["frozen_table_sha256"] for x in art.metrics.read_text().splitlines()}
    assert len(sums) == 1


def test_same_seed_same_metrics(tmp_path, corpora, asvaet_run):
    cfg, art = asvaet_run
    again = train(TrainConfig.from_dict({**cfg.to_dict(), "output_dir": str(tmp_path / "b")}), corpora)
    assert again.metrics.read_bytes() == art.metrics.read_bytes()


def test_checkpoint_reproduces_best_metrics(asvaet_run, corpora):
    _, art = asvaet_run
    report = evaluate(art.checkpoint, corpora.test)
    assert report.accuracy == art.best["accuracy"] and report.macro_f1 == art.best["macro_f1"]
    run = load_run(art.checkpoint)
    assert run.header["epoch"] == art.best["epoch"]


def test_evaluate_rejects_empty(asvaet_run):
    _, art = asvaet_run
    with pytest.raises(ValueError):
        evaluate(art.checkpoint, [])


def test_zero_unlabeled_with_gamma_one(tmp_path, corpora):
    from asvaet.harness.training import Corpora

    only_labeled = Corpora(corpora.vocab, corpora.labeled, [], corpora.test)
    art = train(small_config(tmp_path, gamma=1.0), only_labeled)
    lines = [json.loads(x) for x in art.metrics.read_text().splitlines()]
    assert len(lines) == 2 and all(x["entropy"] == 0.0 for x in lines)


def test_nan_loss_aborts_with_batch_ids(tmp_path, corpora, monkeypatch):
    real = training_mod.joint_objective

    def poisoned(*args, **kwargs):
        obj = real(*args, **kwargs)
        obj.J = Tensor(np.array(np.nan))
        return obj

    monkeypatch.setattr(training_mod, "joint_objective", poisoned)
    with pytest.raises(NumericalError, match="labeled batch ids \\[.*unlabeled batch ids \\["):
        train(small_config(tmp_path), corpora)


def test_supervised_trains_only_classifier(tmp_path, corpora):
    cfg = small_config(tmp_path, mode="supervised")
    trainer = Trainer(cfg, corpora)
    assert trainer.model is None
    art = train(cfg, corpora)
    line = json.loads(art.metrics.read_text().splitlines()[0])
    assert line["recon"] == 0.0 and line["clf_nll"] > 0
    assert "frozen_table_sha256" not in line


def test_kl_annealing_ramps(tmp_path, corpora):
    trainer = Trainer(small_config(tmp_path, kl_anneal_steps=4, kl_weight=1.0), corpora)
    weights = []
    for step in range(6):
        trainer.global_step = step
        weights.append(trainer._kl_weight())
    assert weights == [0.0, 0.25, 0.5, 0.75, 1.0, 1.0]


def test_patience_stops_early(tmp_path, corpora):
    art = train(small_config(tmp_path, epochs=20, patience=1, learning_rate=1e-9), corpora)
    assert len(art.history) == 2


def test_self_training_consumes_pool(tmp_path, corpora):
    cfg = small_config(tmp_path, mode="self_training", self_training_epochs=1)
    art = train(cfg, corpora)
    lines = [json.loads(x) for x in art.metrics.read_text().splitlines()]
    loops = [x for x in lines if x["loop"] > 0]
    remaining = [x["pool_remaining"] for x in loops]
    assert remaining[-1] == 0
    assert all(a > b for a, b in zip(remaining, remaining[1:]))
    # chunk = ceil(30 / 10) for a 30-sample pool
    assert all(x["pseudo_labeled"] == 3 for x in loops) and len(loops) == 10


# -- export and generation ------------------------------------------------------------------------

def test_export_latent(tmp_path, asvaet_run, corpora):
    _, art = asvaet_run
    samples = corpora.test[:5] + corpora.unlabeled[:3]
    n = export_latent(art.checkpoint, samples, tmp_path / "z.csv")
    rows = list(csv.reader(open(tmp_path / "z.csv")))
    assert n == 8 and len(rows) == 9
    assert rows[0] == ["z_0", "z_1", "z_2", "z_3", "gold", "pred"]
    assert all(len(r) == 6 for r in rows)
    assert [r[4] for r in rows[6:]] == ["", "", ""]
    export_latent(art.checkpoint, samples, tmp_path / "z2.csv")
    assert (tmp_path / "z.csv").read_bytes() == (tmp_path / "z2.csv").read_bytes()


def test_export_needs_autoencoder(tmp_path, corpora):
    art = train(small_config(tmp_path, mode="supervised", epochs=1), corpora)
    with pytest.raises(ConfigError):
        export_latent(art.checkpoint, corpora.test, tmp_path / "z.csv")


def test_generation_fixed_z_three_labels(asvaet_run):
    _, art = asvaet_run
    run = load_run(art.final_checkpoint)
    z = np.zeros(4)
    outs = [generate_sentences(run, "battery life", y, n=1, z=z, max_steps=5)[0] for y in range(3)]
    assert all("battery life" in s for s in outs)
    assert generate_sentences(run, "battery life", "positive", n=0) == []
    sampled = generate_sentences(run, "battery life", "negative", n=3, mode="sample", seed=2, max_steps=5)
    assert sampled == generate_sentences(run, "battery life", "negative", n=3, mode="sample", seed=2,
                                         max_steps=5)
    with pytest.raises(ValueError):
        generate_sentences(run, "   ", "positive")


def test_evaluate_classifier_reports(corpora, tmp_path):
    trainer = Trainer(small_config(tmp_path, mode="supervised"), corpora)
    r = evaluate_classifier(trainer.classifier, corpora.test)
    assert 0 <= r.accuracy <= 1 and r.n == len(corpora.test)
