"""Linear-probe evaluation and the reporting harnesses built on it."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass

import numpy as np

from gpa.augment import NUM_PAIRS, PAIRS, AugConfig, AugPair, AugType
from gpa.autodiff import ParamSet, no_grad
from gpa.encoder import EncoderConfig, GraphBatch, embed_graphs
from gpa.errors import StratificationFailed
from gpa.graph import GraphDataset
from gpa.rng import RngStream
from gpa.selector import ScoreVector, batch_scores
from gpa.trainer import TrainConfig, train_fixed, train_random_baseline  # noqa: F401

_FOLD_SLOT = 0xC1


def extract_embeddings(dataset: GraphDataset, w: ParamSet, batch_size: int = 32):
    """Pre-projection embeddings of the original graphs, plus their labels."""
    rows = []
    with no_grad():
        for start in range(0, len(dataset), batch_size):
            batch = GraphBatch.from_graphs(dataset.graphs[start:start + batch_size])
            rows.append(embed_graphs(batch, w, project_head=False).data)
    return np.concatenate(rows, axis=0), dataset.labels()


# --------------------------------------------------------------------------- probe


@dataclass(frozen=True)
class ProbeResult:
    fold_accuracies: tuple
    mean: float
    std: float
    seed: int

    @classmethod
    def from_folds(cls, accs, seed: int) -> "ProbeResult":
        a = np.asarray(accs, dtype=np.float64)
        return cls(tuple(float(x) for x in a), float(a.mean()), float(a.std()), int(seed))

    def as_dict(self) -> dict:
        return {"fold_accuracies": list(self.fold_accuracies), "mean": self.mean,
                "std": self.std, "seed": self.seed}

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"


def stratified_folds(labels, k: int, seed: int) -> np.ndarray:
    """Fold id per sample. Each class is shuffled and dealt round-robin,
    starting at a random fold, so every fold gets its share of each class."""
    labels = np.asarray(labels)
    fold = np.empty(labels.shape[0], dtype=np.int64)
    rng = RngStream(seed, 0, 0, _FOLD_SLOT)
    start = 0
    for c in np.unique(labels):
        members = np.flatnonzero(labels == c)
        members = members[rng.permutation(members.shape[0])]
        fold[members] = (start + np.arange(members.shape[0])) % k
        start = (start + members.shape[0]) % k
    return fold


def fit_logistic(x, y, num_classes: int, l2: float = 1e-4, iters: int = 500):
    """Multinomial logistic regression by full-batch gradient descent on
    ``mean cross-entropy + l2/2 * |W|^2``. Returns ``(W, b)``.

    The step is ``1/L`` for the smoothness bound ``L = |[x 1]|_2^2 / (2n) + l2``.
    """
    n, d = x.shape
    xb = np.concatenate([x, np.ones((n, 1))], axis=1)
    lr = 1.0 / (np.linalg.norm(xb, 2) ** 2 / (2 * n) + l2)
    onehot = np.zeros((n, num_classes))
    onehot[np.arange(n), y] = 1.0
    weight = np.zeros((d, num_classes))
    bias = np.zeros(num_classes)
    for _ in range(iters):
        logits = x @ weight + bias
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - onehot) / n
        weight -= lr * (x.T @ g + l2 * weight)
        bias -= lr * g.sum(axis=0)
    return weight, bias


def _standardize(train, test):
    mu = train.mean(axis=0)
    sd = train.std(axis=0)
    sd[sd == 0.0] = 1.0
    return (train - mu) / sd, (test - mu) / sd


def cv_predictions(embeddings, labels, k: int = 10, seed: int = 0, l2: float = 1e-4,
                   iters: int = 500):
    """Out-of-fold predicted labels, the fold assignment and the seed used.

    Folds whose training part misses a class are rejected; the assignment is
    redrawn once with ``seed + 1`` before giving up.
    """
    x = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    classes = np.unique(y)
    if x.shape[0] < k:
        raise ValueError(f"need at least {k} samples, got {x.shape[0]}")
    if classes.shape[0] < 2:
        raise ValueError("need at least two classes")
    num_classes = int(y.max()) + 1
    for s in (seed, seed + 1):
        fold = stratified_folds(y, k, s)
        if all(np.unique(y[fold != f]).shape[0] == classes.shape[0] for f in range(k)):
            break
    else:
        raise StratificationFailed(f"a training fold misses a class (seeds {seed}, {seed + 1})")
    pred = np.empty_like(y)
    for f in range(k):
        test = fold == f
        xtr, xte = _standardize(x[~test], x[test])
        weight, bias = fit_logistic(xtr, y[~test], num_classes, l2, iters)
        pred[test] = np.argmax(xte @ weight + bias, axis=1)
    return pred, fold, s


def linear_probe_cv(embeddings, labels, k: int = 10, seed: int = 0, l2: float = 1e-4,
                    iters: int = 500) -> ProbeResult:
    pred, fold, used = cv_predictions(embeddings, labels, k, seed, l2, iters)
    y = np.asarray(labels)
    accs = [float(np.mean(pred[fold == f] == y[fold == f])) for f in range(k)]
    return ProbeResult.from_folds(accs, used)


# --------------------------------------------------------------------------- reports


@dataclass(frozen=True)
class AugReport:
    per_graph: tuple  # (graph_id, AugPair, ScoreVector)
    histogram: np.ndarray

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh)
            out.writerow(["graph_id", "pair_index", "pair_name"] + [p.name for p in PAIRS])
            for gid, pair, s in self.per_graph:
                out.writerow([gid, pair.index, pair.name] + [repr(float(x)) for x in s.probs])

    def histogram_dict(self) -> dict:
        return {p.name: int(c) for p, c in zip(PAIRS, self.histogram)}


def augmentation_report(dataset: GraphDataset, w: ParamSet, theta: ParamSet, aug: AugConfig,
                        seed: int, epoch: int = 0, batch_size: int = 32) -> AugReport:
    """Argmax pair and score vector of every graph, with the pair histogram."""
    rows = []
    for start in range(0, len(dataset), batch_size):
        ids = list(range(start, min(start + batch_size, len(dataset))))
        scores = batch_scores([dataset[i] for i in ids], ids, w, theta, aug, seed, epoch)
        rows.extend((s.graph_id, s.argmax(), s) for s in scores)
    hist = np.bincount([p.index for _, p, _ in rows], minlength=NUM_PAIRS)
    return AugReport(tuple(rows), hist)


@dataclass(frozen=True)
class PairProbeGrid:
    """``matrix[n, c]``: fraction of repeats in which graph ``n`` was classified
    correctly by a probe on a model trained with ``pairs[c]`` for every graph."""

    pairs: tuple
    matrix: np.ndarray
    degenerate: tuple
    loss_histories: tuple

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            out = csv.writer(fh)
            out.writerow(["graph_id"] + [p.name for p in self.pairs])
            for n, row in enumerate(self.matrix):
                out.writerow([n] + [repr(float(x)) for x in row])


def probe_fixed_pairs(dataset: GraphDataset, pairs, enc: EncoderConfig, aug: AugConfig,
                      cfg: TrainConfig, repeats: int = 1, k: int = 10) -> PairProbeGrid:
    """Train one selector-free model per (pair, repeat) on all graphs and
    record per-graph out-of-fold correctness.

    (Identical, Identical) is flagged as degenerate: its two views coincide,
    so the positive similarity is always 1 and only the negatives drive
    learning.
    """
    pairs = tuple(p if isinstance(p, AugPair) else PAIRS[int(p)] for p in pairs)
    labels = dataset.labels()
    everything = np.arange(len(dataset))
    grid = np.zeros((len(dataset), len(pairs)))
    histories = []
    for c, pair in enumerate(pairs):
        idx = pair.index
        for r in range(repeats):
            run_cfg = TrainConfig(**{**cfg.__dict__, "seed": cfg.seed + r})
            state = train_fixed(dataset, everything, enc, aug, run_cfg, lambda gid, ep: idx)
            emb, _ = extract_embeddings(dataset, state.w)
            pred, _, _ = cv_predictions(emb, labels, k, run_cfg.seed)
            grid[:, c] += pred == labels
            histories.append((pair.name, r, [row["train_loss"] for row in state.loss_history]))
        grid[:, c] /= repeats
    degenerate = tuple(p == (AugType.IDENTICAL, AugType.IDENTICAL) for p in pairs)
    return PairProbeGrid(pairs, grid, degenerate, tuple(histories))


def comparison_table(results: dict) -> str:
    """Markdown table of ``{method: ProbeResult}``."""
    lines = ["| method | mean accuracy | std | folds | seed |", "|---|---|---|---|---|"]
    for name, r in results.items():
        lines.append(f"| {name} | {100 * r.mean:.2f} | {100 * r.std:.2f} | "
                     f"{len(r.fold_accuracies)} | {r.seed} |")
    return "\n".join(lines) + "\n"


__all__ = [
    "extract_embeddings", "ProbeResult", "stratified_folds", "fit_logistic", "cv_predictions",
    "linear_probe_cv", "AugReport", "augmentation_report", "PairProbeGrid", "probe_fixed_pairs",
    "comparison_table", "train_random_baseline", "ScoreVector",
]
