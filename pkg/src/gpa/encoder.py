"""GIN encoder with sum readout and a two-layer projection head."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from gpa.autodiff import ParamSet, Tensor, init_affine, ops
from gpa.errors import ShapeError


@dataclass(frozen=True)
class EncoderConfig:
    feature_dim: int
    num_layers: int = 3
    hidden_dim: int = 128
    gin_eps: float = 0.0

    def __post_init__(self):
        if self.num_layers < 1 or self.hidden_dim < 1 or self.feature_dim < 1:
            raise ValueError(f"invalid encoder config {self}")


@dataclass(frozen=True)
class GraphBatch:
    """Disjoint union of graphs: stacked features, one global CSR and the
    owning graph of every node."""

    features: np.ndarray
    offsets: np.ndarray
    neighbors: np.ndarray
    graph_ids: np.ndarray
    node_offsets: np.ndarray

    @property
    def num_graphs(self) -> int:
        return self.node_offsets.shape[0] - 1

    @property
    def num_nodes(self) -> int:
        return self.features.shape[0]

    @classmethod
    def from_graphs(cls, graphs) -> "GraphBatch":
        graphs = list(graphs)
        if not graphs:
            raise ValueError("empty batch")
        sizes = np.array([g.num_nodes for g in graphs], dtype=np.int64)
        node_offsets = np.zeros(len(graphs) + 1, dtype=np.int64)
        np.cumsum(sizes, out=node_offsets[1:])
        edge_sizes = np.array([g.neighbors.shape[0] for g in graphs], dtype=np.int64)
        edge_base = np.zeros(len(graphs) + 1, dtype=np.int64)
        np.cumsum(edge_sizes, out=edge_base[1:])
        offsets = np.concatenate(
            [g.offsets[:-1] + edge_base[k] for k, g in enumerate(graphs)] + [edge_base[-1:]])
        neighbors = np.concatenate(
            [g.neighbors + node_offsets[k] for k, g in enumerate(graphs)])
        features = np.concatenate([g.features for g in graphs], axis=0)
        graph_ids = np.repeat(np.arange(len(graphs), dtype=np.int64), sizes)
        return cls(features, offsets.astype(np.int64), neighbors.astype(np.int64), graph_ids,
                   node_offsets)


def init_encoder(cfg: EncoderConfig, seed: int) -> ParamSet:
    params = ParamSet()
    width = cfg.feature_dim
    for k in range(cfg.num_layers):
        init_affine(params, f"gin{k}.lin1", width, cfg.hidden_dim, seed)
        init_affine(params, f"gin{k}.lin2", cfg.hidden_dim, cfg.hidden_dim, seed)
        width = cfg.hidden_dim
    init_affine(params, "proj.lin1", cfg.hidden_dim, cfg.hidden_dim, seed)
    init_affine(params, "proj.lin2", cfg.hidden_dim, cfg.hidden_dim, seed)
    return params


def num_layers(params: ParamSet) -> int:
    k = 0
    while f"gin{k}.lin1.weight" in params:
        k += 1
    return k


def _mlp(x, params, prefix):
    h = ops.relu(ops.linear(x, params[f"{prefix}.lin1.weight"], params[f"{prefix}.lin1.bias"]))
    return ops.linear(h, params[f"{prefix}.lin2.weight"], params[f"{prefix}.lin2.bias"])


def encode_nodes(batch: GraphBatch, params: ParamSet, gin_eps: float = 0.0,
                 layer_norm: bool = True) -> Tensor:
    """``h' = MLP((1 + eps) h + sum of neighbour h)`` for every layer.

    With ``layer_norm`` each layer's output is standardised per node and
    passed through a ReLU; this is batch-independent, unlike batch norm.
    """
    expected = params["gin0.lin1.weight"].shape[0]
    if batch.features.shape[1] != expected:
        raise ShapeError(f"feature width {batch.features.shape[1]}, encoder expects {expected}")
    h = Tensor(batch.features)
    for k in range(num_layers(params)):
        agg = ops.neighbor_sum(h, batch.offsets, batch.neighbors)
        z = ops.add(h if gin_eps == 0.0 else ops.scale(h, 1.0 + gin_eps), agg)
        h = _mlp(z, params, f"gin{k}")
        if layer_norm:
            h = ops.relu(ops.layer_norm_rows(h))
    return h


def readout(node_embeds: Tensor, graph_ids, num_graphs: int | None = None) -> Tensor:
    return ops.segment_sum(node_embeds, graph_ids, num_graphs)


def project(z: Tensor, params: ParamSet) -> Tensor:
    return _mlp(z, params, "proj")


def embed_graphs(batch: GraphBatch, params: ParamSet, project_head: bool = True,
                 gin_eps: float = 0.0, layer_norm: bool = True) -> Tensor:
    z = readout(encode_nodes(batch, params, gin_eps, layer_norm), batch.graph_ids,
                batch.num_graphs)
    return project(z, params) if project_head else z
