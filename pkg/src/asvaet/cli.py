"""Command-line entry point.

Exit codes: 0 success, 1 configuration or data error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import List, Optional

import numpy as np

from .classifiers import available_classifiers
from .data import CorpusError, corpus_stats, load_jsonl, save_word_vectors, synthesize_corpus, \
    synthetic_word_vectors
from .harness import (MODES, CheckpointError, ConfigError, NumericalError, TrainConfig, evaluate,
                      export_latent, generate_sentences, load_run, train)

log = logging.getLogger("asvaet")


def _cmd_train(args) -> int:
    overrides = {"mode": args.mode, "classifier": args.classifier, "seed": args.seed,
                 "output_dir": args.output_dir}
    config = TrainConfig.load(args.config, **overrides)
    for key, value in sorted(config.overridden().items()):
        log.info("config %s = %r (default differs)", key, value)
    result = train(config)
    print(json.dumps({"checkpoint": str(result.checkpoint), "metrics": str(result.metrics),
                      "manifest": str(result.manifest), "best": result.best}, sort_keys=True))
    return 0


def _cmd_evaluate(args) -> int:
    report = evaluate(args.checkpoint, args.data)
    print(json.dumps(report.to_dict(), sort_keys=True))
    return 0


def _cmd_export_latent(args) -> int:
    n = export_latent(args.checkpoint, args.data, args.out)
    log.info("wrote %d rows to %s", n, args.out)
    return 0


def _cmd_generate(args) -> int:
    run = load_run(args.checkpoint)
    z = None
    if args.z is not None:
        z = np.array([float(v) for v in args.z.split(",")])
        if z.shape != (run.config.z_dim,):
            raise ConfigError(f"--z needs {run.config.z_dim} comma-separated values")
    for line in generate_sentences(run, args.aspect, args.label, n=args.n, mode=args.mode,
                                   seed=args.seed, temperature=args.temperature,
                                   max_steps=args.max_steps, z=z):
        print(line)
    return 0


def _cmd_stats(args) -> int:
    print(json.dumps(corpus_stats(load_jsonl(args.data)), sort_keys=True))
    return 0


def _cmd_synthesize(args) -> int:
    corpus = synthesize_corpus(args.seed, args.labeled, args.unlabeled, args.held_out)
    corpus.write(args.out)
    save_word_vectors(synthetic_word_vectors(corpus.spec, dim=args.dim, seed=args.seed),
                      f"{args.out}/vectors.txt")
    log.info("wrote synthetic corpus to %s", args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asvaet", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a classifier in one of the three modes")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", choices=MODES)
    p.add_argument("--classifier", choices=available_classifiers())
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint on a labeled JSONL file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("export-latent", help="write posterior means as CSV")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_export_latent)

    p = sub.add_parser("generate", help="generate sentences for an aspect and polarity")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--aspect", required=True)
    p.add_argument("--label", required=True, choices=("positive", "neutral", "negative"))
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--mode", choices=("greedy", "sample"), default="greedy")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--max-steps", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--z", help="comma-separated latent vector; default draws from the prior")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("stats", help="corpus statistics as JSON")
    p.add_argument("--data", required=True)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("synthesize", help="write a synthetic corpus and word vectors")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--labeled", type=int, default=50)
    p.add_argument("--unlabeled", type=int, default=2000)
    p.add_argument("--held-out", type=int, default=600)
    p.add_argument("--dim", type=int, default=32)
    p.set_defaults(func=_cmd_synthesize)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, CorpusError, CheckpointError, OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
