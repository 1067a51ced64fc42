"""Graph augmentation operators and the unordered pair selection space."""
from __future__ import annotations

import enum
import itertools
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from gpa import kernels
from gpa.graph import Graph
from gpa.rng import RngStream

log = logging.getLogger(__name__)

_EPS = 1e-9


class AugType(enum.IntEnum):
    IDENTICAL = 1
    NODE_DROP = 2
    EDGE_PERT = 3
    SUBGRAPH = 4
    ATTR_MASK = 5

    @property
    def label(self) -> str:
        return _LABELS[self]


_LABELS = {
    AugType.IDENTICAL: "Identical",
    AugType.NODE_DROP: "NodeDrop",
    AugType.EDGE_PERT: "EdgePert",
    AugType.SUBGRAPH: "Subgraph",
    AugType.ATTR_MASK: "AttMask",
}


class AugPair(NamedTuple):
    i: AugType
    j: AugType

    @classmethod
    def of(cls, a, b) -> "AugPair":
        a, b = AugType(a), AugType(b)
        return cls(a, b) if a <= b else cls(b, a)

    @property
    def name(self) -> str:
        return f"{self.i.label}+{self.j.label}"

    @property
    def index(self) -> int:
        return PAIR_INDEX[self]


@dataclass(frozen=True)
class AugConfig:
    ratio: float = 0.2
    walk_budget_factor: int = 10

    def __post_init__(self):
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"ratio must lie in [0, 1], got {self.ratio}")


def enumerate_pairs(k: int = 5) -> list:
    """All unordered pairs with replacement of the first ``k`` types, in
    row-major order ``(1,1), (1,2), ..., (k,k)``."""
    if not 1 <= k <= len(AugType):
        raise ValueError(f"k must lie in 1..{len(AugType)}")
    types = [AugType(t) for t in range(1, k + 1)]
    return [AugPair(a, b) for a, b in itertools.combinations_with_replacement(types, 2)]


PAIRS = tuple(enumerate_pairs(5))
PAIR_INDEX = {p: n for n, p in enumerate(PAIRS)}
NUM_PAIRS = len(PAIRS)

fallback_count = 0


def drop_count(n: int, ratio: float) -> int:
    return int(math.floor(ratio * n + _EPS))


def keep_target(n: int, ratio: float) -> int:
    return min(n, max(1, int(math.ceil((1.0 - ratio) * n - _EPS))))


def identical(g: Graph, ratio: float = 0.0, rng: RngStream | None = None) -> Graph:
    return g


def node_drop(g: Graph, ratio: float, rng: RngStream) -> Graph:
    global fallback_count
    n = g.num_nodes
    k = drop_count(n, ratio)
    if k == 0:
        return g
    if k >= n:
        fallback_count += 1
        log.debug("node_drop would remove every node; returning the graph unchanged")
        return g
    dropped = rng.sample(n, k)
    keep = np.ones(n, dtype=bool)
    keep[dropped] = False
    return g.induced(np.nonzero(keep)[0])


def edge_perturb(g: Graph, ratio: float, rng: RngStream) -> Graph:
    """Remove ``b = floor(ratio * m)`` random edges, then add up to ``b``
    random non-edges of the reduced graph."""
    m = g.num_edges
    b = drop_count(m, ratio)
    if b == 0:
        return g
    n = g.num_nodes
    edges = g.edge_list()
    removed = rng.sample(m, b)
    keep = np.ones(m, dtype=bool)
    keep[removed] = False
    edges = edges[keep]
    iu, iv = np.triu_indices(n, 1)
    codes = iu * n + iv
    present = edges[:, 0] * n + edges[:, 1]
    free = codes[~np.isin(codes, present, assume_unique=True)]
    add = min(b, free.shape[0])
    if add:
        chosen = free[rng.sample(free.shape[0], add)]
        edges = np.concatenate([edges, np.stack([chosen // n, chosen % n], axis=1)])
    return Graph.from_edges(n, edges, g.features, g.label, node_labels=g.node_labels,
                            node_attributes=g.node_attributes)


def subgraph_rw(g: Graph, ratio: float, rng: RngStream, walk_budget_factor: int = 10) -> Graph:
    """Induced subgraph on ``ceil((1 - ratio) * n)`` nodes gathered by a
    random walk that restarts from a random unvisited node when it stalls."""
    n = g.num_nodes
    target = keep_target(n, ratio)
    if target >= n:
        return g
    nodes, rng.counter = kernels.random_walk(g.offsets, g.neighbors, target,
                                             walk_budget_factor * n, rng.key, rng.counter)
    return g.induced(nodes)


def attr_mask(g: Graph, ratio: float, rng: RngStream) -> Graph:
    n = g.num_nodes
    k = drop_count(n, ratio)
    if k == 0:
        return g
    feats = g.features.copy()
    feats[rng.sample(n, k)] = 0.0
    return g.replace(features=feats)


def augment(g: Graph, kind: AugType, cfg: AugConfig, rng: RngStream) -> Graph:
    kind = AugType(kind)
    if kind is AugType.IDENTICAL:
        return g
    if kind is AugType.NODE_DROP:
        return node_drop(g, cfg.ratio, rng)
    if kind is AugType.EDGE_PERT:
        return edge_perturb(g, cfg.ratio, rng)
    if kind is AugType.SUBGRAPH:
        return subgraph_rw(g, cfg.ratio, rng, cfg.walk_budget_factor)
    return attr_mask(g, cfg.ratio, rng)


def apply_pair(g: Graph, pair: AugPair, cfg: AugConfig, rng_i: RngStream, rng_j: RngStream):
    """Two independently randomised views, one per member of ``pair``."""
    return augment(g, pair.i, cfg, rng_i), augment(g, pair.j, cfg, rng_j)
