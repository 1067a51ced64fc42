"""Graph data model, TUDataset parsing, features, splits and statistics."""
from __future__ import annotations

import logging
import math
import os
import re
from dataclasses import dataclass, field

import numpy as np

from gpa.errors import (
    CrossGraphEdge,
    DegenerateSplit,
    FormatMissing,
    MissingNodeLabels,
    ParseError,
    TooManyFolds,
)
from gpa.rng import RngStream

log = logging.getLogger(__name__)

_SPLIT_SLOT = 0x5B1
_KFOLD_SLOT = 0xF01D
_SEP = re.compile(r"[,\s]+")

# Self-loop lines dropped by parse_tudataset since import.
self_loops_dropped = 0


def _frozen(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


class Graph:
    """Undirected simple graph in CSR form with a node-feature matrix.

    Each undirected edge is stored in both directions, neighbour lists are
    sorted, and there are no self-loops.
    """

    __slots__ = ("offsets", "neighbors", "features", "label", "node_labels", "node_attributes")

    def __init__(self, offsets, neighbors, features, label=None, node_labels=None,
                 node_attributes=None):
        self.offsets = _frozen(offsets, np.int64)
        self.neighbors = _frozen(neighbors, np.int64)
        feats = np.asarray(features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] != self.offsets.shape[0] - 1:
            raise ValueError(f"features shape {feats.shape} does not match {self.num_nodes} nodes")
        self.features = _frozen(feats, np.float64)
        self.label = None if label is None else int(label)
        self.node_labels = None if node_labels is None else _frozen(node_labels, np.int64)
        self.node_attributes = (
            None if node_attributes is None else _frozen(node_attributes, np.float64)
        )

    @classmethod
    def from_edges(cls, num_nodes, edges, features=None, label=None, **raw):
        """Build from an iterable of ``(u, v)`` pairs; direction, duplicates
        and self-loops in the input are normalised away."""
        e = np.asarray(list(edges) if not isinstance(edges, np.ndarray) else edges,
                       dtype=np.int64).reshape(-1, 2)
        e = e[e[:, 0] != e[:, 1]]
        both = np.concatenate([e, e[:, ::-1]], axis=0)
        if both.shape[0]:
            both = np.unique(both, axis=0)  # lexicographic: by source, then target
        counts = np.bincount(both[:, 0], minlength=num_nodes) if both.shape[0] else np.zeros(
            num_nodes, dtype=np.int64)
        offsets = np.zeros(num_nodes + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        if features is None:
            features = np.zeros((num_nodes, 0))
        return cls(offsets, both[:, 1], features, label, **raw)

    @property
    def num_nodes(self) -> int:
        return self.offsets.shape[0] - 1

    @property
    def num_edges(self) -> int:
        """Undirected edge count."""
        return self.neighbors.shape[0] // 2

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def degrees(self) -> np.ndarray:
        return np.diff(self.offsets)

    def edge_list(self) -> np.ndarray:
        """Undirected edges as an ``(m, 2)`` array with ``u < v``, sorted."""
        src = np.repeat(np.arange(self.num_nodes, dtype=np.int64), self.degrees())
        keep = src < self.neighbors
        return np.stack([src[keep], self.neighbors[keep]], axis=1)

    def induced(self, nodes) -> "Graph":
        """Subgraph induced on ``nodes``; survivors keep their relative order."""
        nodes = np.unique(np.asarray(nodes, dtype=np.int64))
        remap = np.full(self.num_nodes, -1, dtype=np.int64)
        remap[nodes] = np.arange(nodes.shape[0])
        e = self.edge_list()
        e = remap[e]
        e = e[(e[:, 0] >= 0) & (e[:, 1] >= 0)]
        return Graph.from_edges(
            nodes.shape[0], e, self.features[nodes], self.label,
            node_labels=None if self.node_labels is None else self.node_labels[nodes],
            node_attributes=None if self.node_attributes is None else self.node_attributes[nodes],
        )

    def replace(self, **kw) -> "Graph":
        args = {s: getattr(self, s) for s in self.__slots__}
        args.update(kw)
        return Graph(**args)

    def is_valid(self) -> bool:
        n = self.num_nodes
        off, nb = self.offsets, self.neighbors
        if off[0] != 0 or off[-1] != nb.shape[0] or np.any(np.diff(off) < 0):
            return False
        if nb.shape[0] and (nb.min() < 0 or nb.max() >= n):
            return False
        src = np.repeat(np.arange(n, dtype=np.int64), np.diff(off))
        if np.any(src == nb):
            return False
        pairs = src * n + nb
        if np.unique(pairs).shape[0] != pairs.shape[0]:
            return False
        rev = np.sort(nb * n + src)
        return bool(np.array_equal(np.sort(pairs), rev))

    def __eq__(self, other):
        if not isinstance(other, Graph):
            return NotImplemented

        def same(a, b):
            if a is None or b is None:
                return a is b
            return a.shape == b.shape and np.array_equal(a, b)

        return (
            self.label == other.label
            and same(self.offsets, other.offsets)
            and same(self.neighbors, other.neighbors)
            and same(self.features, other.features)
        )

    __hash__ = None

    def __repr__(self):
        return f"Graph(n={self.num_nodes}, m={self.num_edges}, F={self.feature_dim}, label={self.label})"


@dataclass(frozen=True)
class GraphDataset:
    name: str
    graphs: tuple
    num_classes: int
    label_values: tuple = ()
    node_label_values: tuple = field(default=())

    def __post_init__(self):
        if len(self.graphs) < 1:
            raise ValueError("dataset must contain at least one graph")
        dims = {g.feature_dim for g in self.graphs}
        if len(dims) != 1:
            raise ValueError(f"graphs disagree on feature_dim: {sorted(dims)}")

    @property
    def feature_dim(self) -> int:
        return self.graphs[0].feature_dim

    def __len__(self):
        return len(self.graphs)

    def __getitem__(self, i):
        return self.graphs[i]

    def labels(self) -> np.ndarray:
        return np.array([-1 if g.label is None else g.label for g in self.graphs], dtype=np.int64)

    def subset(self, indices) -> "GraphDataset":
        return GraphDataset(self.name, tuple(self.graphs[i] for i in indices), self.num_classes,
                            self.label_values, self.node_label_values)

    def with_graphs(self, graphs) -> "GraphDataset":
        return GraphDataset(self.name, tuple(graphs), self.num_classes, self.label_values,
                            self.node_label_values)


@dataclass(frozen=True)
class SplitSpec:
    train_indices: np.ndarray
    valid_indices: np.ndarray
    seed: int


@dataclass(frozen=True)
class DatasetStats:
    name: str
    num_graphs: int
    avg_nodes: float
    avg_edges: float
    num_classes: int

    def as_dict(self):
        return {
            "name": self.name,
            "num_graphs": self.num_graphs,
            "avg_nodes": self.avg_nodes,
            "avg_edges": self.avg_edges,
            "num_classes": self.num_classes,
        }


# --------------------------------------------------------------------------- parsing


def _read_rows(path, convert, width=None):
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            toks = [t for t in _SEP.split(line) if t]
            try:
                vals = [convert(t) for t in toks]
            except ValueError:
                raise ParseError(path, lineno, f"cannot parse {line!r}") from None
            if width is not None and len(vals) != width:
                raise ParseError(path, lineno, f"expected {width} values, got {len(vals)}")
            rows.append(vals)
    return rows


def _read_ints(path, width=1):
    rows = _read_rows(path, int, width)
    return np.asarray(rows, dtype=np.int64).reshape(-1, width)


def parse_tudataset(directory, name) -> GraphDataset:
    """Read a dataset stored in the TU plain-text format.

    Node labels and attributes are kept on each graph as raw data; the
    default features are ``[one-hot node labels || attributes]`` with either
    part omitted when absent. Use :func:`build_features` to pick another
    policy.
    """
    global self_loops_dropped

    def path(suffix):
        return os.path.join(directory, f"{name}_{suffix}.txt")

    for suffix in ("A", "graph_indicator", "graph_labels"):
        if not os.path.isfile(path(suffix)):
            raise FormatMissing(f"missing {path(suffix)}")

    indicator = _read_ints(path("graph_indicator"))[:, 0]
    graph_labels_raw = _read_ints(path("graph_labels"))[:, 0]
    edges = _read_ints(path("A"), 2) - 1
    n_total = indicator.shape[0]
    num_graphs = graph_labels_raw.shape[0]

    node_labels = None
    if os.path.isfile(path("node_labels")):
        node_labels = _read_ints(path("node_labels"))[:, 0]
        if node_labels.shape[0] != n_total:
            raise ParseError(path("node_labels"), node_labels.shape[0],
                             f"expected {n_total} rows")
    node_attrs = None
    if os.path.isfile(path("node_attributes")):
        node_attrs = np.asarray(_read_rows(path("node_attributes"), float), dtype=np.float64)
        if node_attrs.shape[0] != n_total:
            raise ParseError(path("node_attributes"), node_attrs.shape[0],
                             f"expected {n_total} rows")

    if indicator.size and (indicator.min() < 1 or indicator.max() > num_graphs):
        raise ParseError(path("graph_indicator"), 0,
                         f"graph ids must lie in 1..{num_graphs}")
    if edges.size and (edges.min() < 0 or edges.max() >= n_total):
        raise ParseError(path("A"), 0, f"node ids must lie in 1..{n_total}")

    gid = indicator - 1
    order = np.argsort(gid, kind="stable")
    counts = np.bincount(gid, minlength=num_graphs)
    starts = np.zeros(num_graphs + 1, dtype=np.int64)
    np.cumsum(counts, out=starts[1:])
    local = np.empty(n_total, dtype=np.int64)
    local[order] = np.arange(n_total) - starts[gid[order]]

    if edges.shape[0]:
        ga, gb = gid[edges[:, 0]], gid[edges[:, 1]]
        bad = np.nonzero(ga != gb)[0]
        if bad.size:
            i = int(bad[0])
            raise CrossGraphEdge(
                f"{path('A')}:{i + 1}: edge ({edges[i, 0] + 1}, {edges[i, 1] + 1}) joins graphs "
                f"{ga[i] + 1} and {gb[i] + 1}"
            )
        loops = edges[:, 0] == edges[:, 1]
        if loops.any():
            self_loops_dropped += int(loops.sum())
            log.warning("%s: dropped %d self-loop lines", name, int(loops.sum()))
            edges = edges[~loops]
    edge_graph = gid[edges[:, 0]] if edges.shape[0] else np.zeros(0, dtype=np.int64)
    eorder = np.argsort(edge_graph, kind="stable")
    edges, edge_graph = edges[eorder], edge_graph[eorder]
    ebounds = np.searchsorted(edge_graph, np.arange(num_graphs + 1))

    label_values = np.unique(graph_labels_raw)
    labels = np.searchsorted(label_values, graph_labels_raw)
    nl_values = np.unique(node_labels) if node_labels is not None else np.zeros(0, dtype=np.int64)

    graphs = []
    for g in range(num_graphs):
        members = order[starts[g]:starts[g + 1]]
        e = local[edges[ebounds[g]:ebounds[g + 1]]]
        raw_nl = None if node_labels is None else node_labels[members]
        raw_na = None if node_attrs is None else node_attrs[members]
        feats = _default_features(raw_nl, raw_na, nl_values, members.shape[0])
        graphs.append(Graph.from_edges(members.shape[0], e, feats, int(labels[g]),
                                       node_labels=raw_nl, node_attributes=raw_na))
    return GraphDataset(name, tuple(graphs), int(label_values.shape[0]),
                        tuple(int(v) for v in label_values), tuple(int(v) for v in nl_values))


def _one_hot(idx, width):
    out = np.zeros((idx.shape[0], width))
    out[np.arange(idx.shape[0]), idx] = 1.0
    return out


def _default_features(raw_nl, raw_na, nl_values, n):
    parts = []
    if raw_nl is not None:
        parts.append(_one_hot(np.searchsorted(nl_values, raw_nl), nl_values.shape[0]))
    if raw_na is not None:
        parts.append(raw_na)
    if not parts:
        return np.zeros((n, 0))
    return np.concatenate(parts, axis=1)


def write_tudataset(dataset: GraphDataset, directory) -> None:
    """Write ``dataset`` in TU format (inverse of :func:`parse_tudataset`)."""
    os.makedirs(directory, exist_ok=True)
    name = dataset.name

    def path(suffix):
        return os.path.join(directory, f"{name}_{suffix}.txt")

    label_values = dataset.label_values or tuple(range(dataset.num_classes))
    base = 0
    with open(path("A"), "w") as fa, open(path("graph_indicator"), "w") as fi, \
            open(path("graph_labels"), "w") as fl:
        for k, g in enumerate(dataset.graphs):
            src = np.repeat(np.arange(g.num_nodes), g.degrees())
            for u, v in zip(src, g.neighbors):
                fa.write(f"{base + u + 1}, {base + v + 1}\n")
            fi.write(f"{k + 1}\n" * g.num_nodes)
            fl.write(f"{label_values[g.label] if g.label is not None else 0}\n")
            base += g.num_nodes
    if all(g.node_labels is not None for g in dataset.graphs):
        with open(path("node_labels"), "w") as fh:
            for g in dataset.graphs:
                fh.writelines(f"{int(v)}\n" for v in g.node_labels)
    if all(g.node_attributes is not None for g in dataset.graphs):
        with open(path("node_attributes"), "w") as fh:
            for g in dataset.graphs:
                for row in g.node_attributes:
                    fh.write(", ".join(repr(float(x)) for x in row) + "\n")


# --------------------------------------------------------------------------- features


def build_features(raw: GraphDataset, policy: str = "one_hot_labels", cap: int = 10) -> GraphDataset:
    """Replace node features according to ``policy``.

    ``one_hot_labels``: one-hot node label, concatenated with node attributes
    when the dataset has them. ``one_hot_degree``: one-hot degree with
    degrees ``>= cap`` sharing the last slot (width ``cap + 1``).
    """
    if policy == "one_hot_labels":
        if any(g.node_labels is None for g in raw.graphs):
            raise MissingNodeLabels(f"{raw.name} has no node labels")
        values = np.unique(np.concatenate([g.node_labels for g in raw.graphs]))
        graphs = [g.replace(features=_default_features(g.node_labels, g.node_attributes, values,
                                                       g.num_nodes))
                  for g in raw.graphs]
        out = raw.with_graphs(graphs)
        return GraphDataset(out.name, out.graphs, out.num_classes, out.label_values,
                            tuple(int(v) for v in values))
    if policy == "one_hot_degree":
        if cap < 0:
            raise ValueError("cap must be non-negative")
        graphs = [g.replace(features=_one_hot(np.minimum(g.degrees(), cap), cap + 1))
                  for g in raw.graphs]
        return raw.with_graphs(graphs)
    raise ValueError(f"unknown feature policy {policy!r}")


# --------------------------------------------------------------------------- splits


def split(dataset, valid_fraction: float, seed: int) -> SplitSpec:
    """Random train/validation partition; ``len(valid) = round(fraction * N)``."""
    n = dataset if isinstance(dataset, int) else len(dataset)
    if not 0.0 < valid_fraction < 1.0:
        raise DegenerateSplit(f"valid_fraction must be in (0, 1), got {valid_fraction}")
    n_valid = int(math.floor(valid_fraction * n + 0.5))
    if n_valid == 0 or n_valid == n:
        raise DegenerateSplit(f"fraction {valid_fraction} of {n} graphs leaves an empty side")
    perm = RngStream(seed, 0, 0, _SPLIT_SLOT).permutation(n)
    return SplitSpec(np.sort(perm[n_valid:]), np.sort(perm[:n_valid]), seed)


def kfold(indices, k: int, seed: int):
    """Shuffle ``indices`` and cut them into ``k`` folds whose sizes differ by
    at most one (the first ``len % k`` folds get the extra element)."""
    idx = np.asarray(indices, dtype=np.int64)
    if k < 1 or k > idx.shape[0]:
        raise TooManyFolds(f"cannot make {k} folds from {idx.shape[0]} items")
    perm = idx[RngStream(seed, 0, 0, _KFOLD_SLOT).permutation(idx.shape[0])]
    q, r = divmod(idx.shape[0], k)
    folds, pos = [], 0
    for f in range(k):
        size = q + (1 if f < r else 0)
        test = np.sort(perm[pos:pos + size])
        train = np.sort(np.concatenate([perm[:pos], perm[pos + size:]]))
        folds.append((train, test))
        pos += size
    return folds


def stats(dataset: GraphDataset) -> DatasetStats:
    nodes = np.array([g.num_nodes for g in dataset.graphs], dtype=np.float64)
    edges = np.array([g.num_edges for g in dataset.graphs], dtype=np.float64)
    return DatasetStats(dataset.name, len(dataset.graphs), float(nodes.mean()),
                        float(edges.mean()), dataset.num_classes)
