"""Keyed generation and caching of augmented views for one minibatch.

Every view is a pure function of ``(seed, graph_id, epoch, slot)``. Slots
``0..29`` hold the two members of each of the 15 pairs (used for the
contrastive losses); slots from ``SCORE_SLOT`` hold the single-type draws
the selector scores.
"""
from __future__ import annotations

import numpy as np

from gpa.augment import NUM_PAIRS, PAIRS, AugConfig, AugType, augment
from gpa.encoder import GraphBatch
from gpa.rng import RngStream

SCORE_SLOT = 64
RANDOM_PAIR_SLOT = 999
NUM_SCORE_VIEWS = 9


def score_view_index(kind: AugType, draw: int) -> int:
    """Position of a single-type draw among the 9 scoring views: one
    Identical view, then two draws for each other type."""
    kind = AugType(kind)
    if kind is AugType.IDENTICAL:
        return 0
    return 1 + 2 * (int(kind) - 2) + draw


def _pair_score_views():
    left, right = [], []
    for p in PAIRS:
        if p.i == p.j:
            left.append(score_view_index(p.i, 0))
            right.append(score_view_index(p.j, 1))
        else:
            left.append(score_view_index(p.i, 0))
            right.append(score_view_index(p.j, 0))
    return np.array(left), np.array(right)


PAIR_LEFT_VIEW, PAIR_RIGHT_VIEW = _pair_score_views()


class ViewBank:
    """Augmented views of a fixed list of graphs at a fixed ``epoch``."""

    def __init__(self, graphs, graph_ids, aug: AugConfig, seed: int, epoch: int):
        self.graphs = list(graphs)
        self.graph_ids = [int(i) for i in graph_ids]
        if len(self.graphs) != len(self.graph_ids):
            raise ValueError("graphs and graph_ids differ in length")
        self.aug, self.seed, self.epoch = aug, seed, epoch
        self._views = {}
        self._batches = {}

    def __len__(self):
        return len(self.graphs)

    def view(self, n: int, kind: AugType, slot: int):
        key = (n, int(kind), slot)
        v = self._views.get(key)
        if v is None:
            g = self.graphs[n]
            if AugType(kind) is AugType.IDENTICAL:
                v = g
            else:
                rng = RngStream(self.seed, self.graph_ids[n], self.epoch, slot)
                v = augment(g, kind, self.aug, rng)
            self._views[key] = v
        return v

    def pair_views(self, n: int, pair_index: int):
        p = PAIRS[pair_index]
        return (self.view(n, p.i, 2 * pair_index), self.view(n, p.j, 2 * pair_index + 1))

    def score_views(self, n: int):
        out = [self.view(n, AugType.IDENTICAL, SCORE_SLOT)]
        for t in (AugType.NODE_DROP, AugType.EDGE_PERT, AugType.SUBGRAPH, AugType.ATTR_MASK):
            base = SCORE_SLOT + 2 * int(t)
            out.append(self.view(n, t, base))
            out.append(self.view(n, t, base + 1))
        return out

    def score_batch(self) -> GraphBatch:
        """All scoring views, graph-major: row ``9 * n + v``."""
        b = self._batches.get("score")
        if b is None:
            b = GraphBatch.from_graphs(v for n in range(len(self)) for v in self.score_views(n))
            self._batches["score"] = b
        return b

    def pair_batches(self, pair_indices) -> tuple:
        """Batches of first and second views where graph ``n`` uses pair
        ``pair_indices[n]``."""
        key = ("pairs", tuple(int(p) for p in pair_indices))
        b = self._batches.get(key)
        if b is None:
            firsts, seconds = zip(*(self.pair_views(n, p) for n, p in enumerate(key[1])))
            b = (GraphBatch.from_graphs(firsts), GraphBatch.from_graphs(seconds))
            self._batches[key] = b
        return b

    def all_pairs_batch(self) -> GraphBatch:
        """Both views under every pair, ordered ``(pair, member, graph)``:
        row ``(2 * p + member) * B + n``."""
        b = self._batches.get("all")
        if b is None:
            views = []
            for p in range(NUM_PAIRS):
                firsts, seconds = zip(*(self.pair_views(n, p) for n in range(len(self))))
                views.extend(firsts)
                views.extend(seconds)
            b = GraphBatch.from_graphs(views)
            self._batches["all"] = b
        return b
