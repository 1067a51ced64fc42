"""Compiled vs pure-Python kernels, plus one encoder forward/backward.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Both backends are imported directly so one process can compare them; the
encoder timing runs each backend in a subprocess through GPA_PURE_PYTHON.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from gpa import _kernels_py
from gpa.rng import hash64

try:
    from gpa import _kernels as _kernels_c
except ImportError:
    _kernels_c = None


def random_csr(n, avg_degree, seed):
    rng = np.random.default_rng(seed)
    m = n * avg_degree // 2
    u, v = rng.integers(0, n, m), rng.integers(0, n, m)
    keep = u != v
    src = np.concatenate([u[keep], v[keep]])
    dst = np.concatenate([v[keep], u[keep]])
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=offsets[1:])
    return offsets, dst.astype(np.int64)


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


ENCODER_SNIPPET = """
import time
from gpa.encoder import EncoderConfig, GraphBatch, embed_graphs, init_encoder
from gpa.autodiff import Tape, backward, ops
from gpa.graph import build_features, parse_tudataset
from gpa.kernels import BACKEND
ds = build_features(parse_tudataset({data!r}, "MUTAG"))
batch = GraphBatch.from_graphs(ds.graphs[:128])
w = init_encoder(EncoderConfig(ds.feature_dim, 3, 128), 0)
times = []
for _ in range({repeat}):
    t = time.perf_counter()
    with Tape():
        backward(ops.sum(embed_graphs(batch, w)), w)
    times.append(time.perf_counter() - t)
print(BACKEND, min(times))
"""


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if _kernels_c is None:
        print("compiled extension not built; only the Python backend is available")

    offsets, neighbors = random_csr(4000, 4, 0)
    x = np.random.default_rng(1).normal(size=(4000, 128))
    ids = np.sort(np.random.default_rng(2).integers(0, 128, 4000)).astype(np.int64)
    walk_offsets, walk_neighbors = random_csr(200, 3, 3)
    key = hash64(0, 1, 2, 3)

    cases = {
        "neighbor_sum 4000x128": lambda k: k.neighbor_sum(offsets, neighbors, x),
        "segment_sum 4000x128 -> 128": lambda k: k.segment_sum(x, ids, 128),
        "random_walk 160 of 200 nodes": lambda k: k.random_walk(
            walk_offsets, walk_neighbors, 160, 2000, key, 0),
    }
    print(f"{'kernel':32s} {'python ms':>10s} {'compiled ms':>12s} {'speedup':>8s}")
    for name, call in cases.items():
        tp = best(lambda: call(_kernels_py), args.repeat)
        if _kernels_c is None:
            print(f"{name:32s} {1e3 * tp:10.3f} {'-':>12s} {'-':>8s}")
            continue
        tc = best(lambda: call(_kernels_c), args.repeat)
        print(f"{name:32s} {1e3 * tp:10.3f} {1e3 * tc:12.3f} {tp / tc:7.1f}x")

    data = os.path.join(os.path.dirname(__file__), "..", "data", "MUTAG")
    if os.path.isdir(data):
        print("\nencoder forward+backward, 128 MUTAG graphs, hidden 128:")
        snippet = ENCODER_SNIPPET.format(data=os.path.abspath(data), repeat=max(3, args.repeat // 4))
        for pure in ("1", "0"):
            env = {**os.environ, "GPA_PURE_PYTHON": pure}
            out = subprocess.run([sys.executable, "-c", snippet], env=env, check=True,
                                 capture_output=True, text=True).stdout.split()
            print(f"  {out[0]:9s} {1e3 * float(out[1]):8.2f} ms")


if __name__ == "__main__":
    main()
