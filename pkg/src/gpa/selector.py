"""Per-graph augmentation-pair scoring and argmax selection."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from gpa.augment import NUM_PAIRS, PAIRS, AugConfig, AugPair
from gpa.autodiff import ParamSet, Tensor, init_affine, no_grad, ops
from gpa.encoder import GraphBatch, embed_graphs
from gpa.views import NUM_SCORE_VIEWS, PAIR_LEFT_VIEW, PAIR_RIGHT_VIEW, ViewBank


@dataclass(frozen=True)
class ScoreVector:
    probs: np.ndarray
    graph_id: int

    def argmax(self) -> AugPair:
        return select_argmax(self)


def init_score_net(embed_dim: int, hidden: int = 128, seed: int = 0) -> ParamSet:
    """Score network: ``[z_i || z_j]`` (width ``2 * embed_dim``) -> relu -> scalar."""
    params = ParamSet()
    init_affine(params, "score.lin1", 2 * embed_dim, hidden, seed + 1)
    init_affine(params, "score.lin2", hidden, 1, seed + 1)
    return params


def score_net(pairs_in: Tensor, theta: ParamSet) -> Tensor:
    h = ops.relu(ops.linear(pairs_in, theta["score.lin1.weight"], theta["score.lin1.bias"]))
    return ops.linear(h, theta["score.lin2.weight"], theta["score.lin2.bias"])


def _pair_inputs(z: Tensor, num_graphs: int, left_views, right_views) -> Tensor:
    """Rows ``15 * n + p``: concatenated embeddings of pair ``p``'s two views."""
    base = NUM_SCORE_VIEWS * np.repeat(np.arange(num_graphs), NUM_PAIRS)
    left = base + np.tile(left_views, num_graphs)
    right = base + np.tile(right_views, num_graphs)
    return ops.concat([ops.gather_rows(z, left), ops.gather_rows(z, right)], axis=1)


def pair_logits(bank: ViewBank, w: ParamSet, theta: ParamSet, cache: bool = True,
                score_fn=score_net) -> Tensor:
    """Logits ``[B, 15]`` in pair-table order."""
    b = len(bank)
    if cache:
        z = embed_graphs(bank.score_batch(), w, project_head=True)
        inputs = _pair_inputs(z, b, PAIR_LEFT_VIEW, PAIR_RIGHT_VIEW)
    else:
        rows = []
        for n in range(b):
            views = bank.score_views(n)
            for p in range(NUM_PAIRS):
                pair_batch = GraphBatch.from_graphs(
                    [views[PAIR_LEFT_VIEW[p]], views[PAIR_RIGHT_VIEW[p]]])
                zz = embed_graphs(pair_batch, w, project_head=True)
                rows.append(ops.reshape(zz, (1, -1)))
        inputs = ops.concat(rows, axis=0)
    return ops.reshape(score_fn(inputs, theta), (b, NUM_PAIRS))


def pair_probabilities(bank: ViewBank, w: ParamSet, theta: ParamSet, cache: bool = True,
                       score_fn=score_net) -> Tensor:
    """Softmax over the 15 pair logits of every graph, on the tape."""
    return ops.row_softmax(pair_logits(bank, w, theta, cache, score_fn))


def batch_scores(graphs, graph_ids, w: ParamSet, theta: ParamSet, aug: AugConfig, seed: int,
                 epoch: int = 0, cache: bool = True, bank: ViewBank | None = None) -> list:
    bank = bank or ViewBank(graphs, graph_ids, aug, seed, epoch)
    with no_grad():
        probs = pair_probabilities(bank, w, theta, cache).data
    return [ScoreVector(probs[n], bank.graph_ids[n]) for n in range(len(bank))]


def score_pairs(g, graph_id: int, w: ParamSet, theta: ParamSet, aug: AugConfig, seed: int,
                epoch: int = 0) -> ScoreVector:
    return batch_scores([g], [graph_id], w, theta, aug, seed, epoch)[0]


def select_argmax(s) -> AugPair:
    """Pair with the largest score; ties go to the lowest table index."""
    probs = s.probs if isinstance(s, ScoreVector) else np.asarray(s)
    return PAIRS[int(np.argmax(probs))]


def write_scores_csv(path, scores) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(["graph_id"] + [p.name for p in PAIRS] + ["argmax_pair"])
        for s in scores:
            out.writerow([s.graph_id] + [repr(float(x)) for x in s.probs] + [s.argmax().name])
