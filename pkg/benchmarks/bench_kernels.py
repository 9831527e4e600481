"""Compare the compiled kernels with the numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--steps 20]

Prints per-kernel timings on shapes typical of a desk-scale run, then the
wall time of a few full training steps under each backend (the second part
runs in subprocesses because the backend is fixed at import).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from asvaet.autodiff import _pykernels

try:
    from asvaet.autodiff import _ckernels
except ImportError:
    _ckernels = None

STEP_SCRIPT = """
import time, numpy as np
from asvaet.autodiff.kernels import BACKEND
from asvaet.data import synthesize_corpus, synthetic_word_vectors
from asvaet.harness import TrainConfig
from asvaet.harness.training import Corpora, Trainer, tokenize_all
c = synthesize_corpus(0, 64, 64, 8)
v = synthetic_word_vectors(c.spec, 32)
corp = Corpora(v, tokenize_all(c.labeled, v, 80), tokenize_all(c.unlabeled, v, 80), tokenize_all(c.held_out, v, 80))
t = Trainer(TrainConfig(d_model=32, n_heads=4, z_dim=16, vectors_dim=32), corp)
idx = np.arange(32)
t._asvaet_step(corp.labeled, corp.unlabeled, idx, idx)
start = time.perf_counter()
for _ in range({steps}):
    t._asvaet_step(corp.labeled, corp.unlabeled, idx, idx)
print(BACKEND, (time.perf_counter() - start) / {steps})
"""


def cases(rng):
    rows, width = 4096, 100
    x = rng.normal(size=(rows, width))
    g = rng.normal(size=(rows, width))
    gain, bias = rng.normal(size=width), rng.normal(size=width)
    vocab_logits = rng.normal(size=(1024, 400))
    idx = rng.integers(0, 400, size=8192).astype(np.int64)
    src = rng.normal(size=(8192, 100))
    return {
        "softmax_fwd 4096x100": lambda k: k.softmax_fwd(x),
        "softmax_bwd 4096x100": lambda k: k.softmax_bwd(x, g),
        "log_softmax_fwd 1024x400": lambda k: k.log_softmax_fwd(vocab_logits),
        "log_softmax_bwd 1024x400": lambda k: k.log_softmax_bwd(vocab_logits, vocab_logits),
        "layer_norm_fwd 4096x100": lambda k: k.layer_norm_fwd(x, gain, bias, 1e-5),
        "layer_norm_bwd 4096x100": lambda k: k.layer_norm_bwd(g, x, np.ones(rows), gain),
        "scatter_add_rows 8192->400": lambda k: k.scatter_add_rows(400, idx, src),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--steps", type=int, default=20)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled kernels not built; run `pip install -e . --no-build-isolation` first")
    print(f"{'kernel':30s} {'numpy ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, fn in cases(np.random.default_rng(0)).items():
        py = min(timeit.repeat(lambda: fn(_pykernels), number=10, repeat=args.repeat)) / 10 * 1e3
        if _ckernels is None:
            print(f"{name:30s} {py:10.3f} {'-':>10s} {'-':>8s}")
            continue
        cy = min(timeit.repeat(lambda: fn(_ckernels), number=10, repeat=args.repeat)) / 10 * 1e3
        print(f"{name:30s} {py:10.3f} {cy:10.3f} {py / cy:7.2f}x")

    print("\nfull training step (32 labeled + 32 unlabeled, d_model 32)")
    for pure in ("1", "0"):
        env = dict(os.environ, ASVAET_PURE_PYTHON=pure)
        out = subprocess.run([sys.executable, "-c", STEP_SCRIPT.format(steps=args.steps)], env=env,
                             capture_output=True, text=True, check=True).stdout.split()
        print(f"  {out[0]:7s} {float(out[1]) * 1e3:8.1f} ms/step")


if __name__ == "__main__":
    main()
