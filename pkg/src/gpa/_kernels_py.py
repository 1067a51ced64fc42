"""Reference numpy / pure-Python implementations of the hot kernels.

These are the fallback when the compiled ``_kernels`` extension is absent,
and the oracle that the compiled versions are tested against.
"""
import numpy as np

from gpa.rng import uniform_at

BACKEND = "python"


def neighbor_sum(offsets, neighbors, x):
    """Row ``v`` of the result is the sum of ``x[u]`` over neighbours ``u`` of ``v``."""
    n = offsets.shape[0] - 1
    out = np.zeros((n, x.shape[1]), dtype=np.float64)
    if neighbors.shape[0] == 0:
        return out
    starts = offsets[:-1]
    nz = np.diff(offsets) > 0
    out[nz] = np.add.reduceat(x[neighbors], starts[nz], axis=0)
    return out


def segment_sum(x, ids, num_segments):
    out = np.zeros((num_segments, x.shape[1]), dtype=np.float64)
    np.add.at(out, ids, x)
    return out


def random_walk(offsets, neighbors, target, budget, key, counter):
    """Collect ``target`` distinct nodes by random walk with restarts.

    Returns the collected node ids in visiting order and the advanced
    stream counter.
    """
    n = offsets.shape[0] - 1
    visited = bytearray(n)
    order = []
    cur = min(int(uniform_at(key, counter) * n), n - 1)
    counter += 1
    visited[cur] = 1
    order.append(cur)
    steps = 0
    while len(order) < target:
        lo = int(offsets[cur])
        deg = int(offsets[cur + 1]) - lo
        if deg == 0 or steps >= budget:
            free = [v for v in range(n) if not visited[v]]
            j = min(int(uniform_at(key, counter) * len(free)), len(free) - 1)
            counter += 1
            cur = free[j]
            visited[cur] = 1
            order.append(cur)
            steps = 0
            continue
        j = min(int(uniform_at(key, counter) * deg), deg - 1)
        counter += 1
        cur = int(neighbors[lo + j])
        steps += 1
        if not visited[cur]:
            visited[cur] = 1
            order.append(cur)
    return np.asarray(order, dtype=np.int64), counter
