"""Contrastive loss and the alternating bi-level optimiser.

The encoder/projection weights ``w`` minimise the contrastive loss on
training minibatches with augmentation pairs picked by the selector; the
selector weights ``theta`` minimise a score-weighted contrastive loss on
validation minibatches, differentiated through one virtual SGD step of
``w`` with a finite-difference estimate of the mixed second-order term.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from gpa.augment import NUM_PAIRS, AugConfig
from gpa.autodiff import Adam, ParamSet, Tape, Tensor, backward, no_grad, ops, sgd_step
from gpa.encoder import EncoderConfig, embed_graphs, init_encoder
from gpa.errors import (
    InsufficientBatch,
    NonFiniteGradient,
    OracleTooExpensive,
    ShapeError,
    ZeroNormError,
)
from gpa.graph import GraphDataset, SplitSpec
from gpa.rng import RngStream
from gpa.selector import init_score_net, pair_probabilities
from gpa.views import RANDOM_PAIR_SLOT, ViewBank

log = logging.getLogger(__name__)

_SHUFFLE_SLOT = 0x5F
_VALID_SLOT = 0x7A


@dataclass
class TrainConfig:
    batch_size: int = 128
    lr_w: float = 1e-3
    lr_theta: float = 1e-3
    tau: float = 0.2
    epochs: int = 20
    eps_scale: float = 0.01
    seed: int = 0
    score_hidden: int = 128
    optimizer: str = "adam"

    def __post_init__(self):
        if self.tau <= 0 or self.lr_w <= 0 or self.lr_theta <= 0:
            raise ValueError("tau and learning rates must be positive")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class TrainerState:
    w: ParamSet
    theta: ParamSet | None
    opt_w: Adam | None = None
    opt_theta: Adam | None = None
    epoch: int = 0
    step: int = 0
    loss_history: list = field(default_factory=list)
    aborted: str | None = None

    def epoch_means(self, key="train_loss") -> dict:
        out = {}
        for row in self.loss_history:
            v = row.get(key)
            if v is not None:
                out.setdefault(row["epoch"], []).append(v)
        return {e: float(np.mean(v)) for e, v in out.items()}


# --------------------------------------------------------------------------- losses


def ntxent_per_graph(z_i: Tensor, z_j: Tensor, tau: float) -> Tensor:
    """Per-anchor loss ``-sim(i_n, j_n)/tau + log sum_{m != n} exp(sim(i_n, j_m)/tau)``.

    The positive pair is not part of the denominator.
    """
    if z_i.shape != z_j.shape or z_i.ndim != 2:
        raise ShapeError(f"ntxent: {z_i.shape} vs {z_j.shape}")
    b = z_i.shape[0]
    if b < 2:
        raise InsufficientBatch(f"need at least 2 graphs for negatives, got {b}")
    a = ops.normalize_rows(z_i)
    c = ops.normalize_rows(z_j)
    sims = ops.scale(ops.matmul(a, ops.transpose(c)), 1.0 / tau)
    pos = ops.scale(ops.sum(ops.mul(a, c), axis=1), 1.0 / tau)
    neg = ops.row_logsumexp(sims, mask=~np.eye(b, dtype=bool))
    return ops.sub(neg, pos)


def ntxent_loss(z_i, z_j, tau: float) -> Tensor:
    z_i = z_i if isinstance(z_i, Tensor) else Tensor(z_i)
    z_j = z_j if isinstance(z_j, Tensor) else Tensor(z_j)
    return ops.mean(ntxent_per_graph(z_i, z_j, tau))


def select_pairs(bank: ViewBank, w: ParamSet, theta: ParamSet) -> np.ndarray:
    with no_grad():
        probs = pair_probabilities(bank, w, theta).data
    return np.argmax(probs, axis=1)


def hard_train_loss(bank: ViewBank, w: ParamSet, theta: ParamSet | None, tau: float,
                    pairs=None) -> Tensor:
    """Contrastive loss with each graph's argmax pair (or the given ``pairs``);
    no gradient reaches ``theta``."""
    if pairs is None:
        pairs = select_pairs(bank, w, theta)
    first, second = bank.pair_batches(pairs)
    return ntxent_loss(embed_graphs(first, w), embed_graphs(second, w), tau)


def pair_loss_matrix(bank: ViewBank, w: ParamSet, tau: float) -> Tensor:
    """``[B, 15]`` per-graph contrastive losses under each pair, negatives
    taken from the same batch under the same pair."""
    b = len(bank)
    z = embed_graphs(bank.all_pairs_batch(), w)
    cols = []
    rows = np.arange(b)
    for p in range(NUM_PAIRS):
        za = ops.gather_rows(z, 2 * p * b + rows)
        zb = ops.gather_rows(z, (2 * p + 1) * b + rows)
        cols.append(ops.reshape(ntxent_per_graph(za, zb, tau), (b, 1)))
    return ops.concat(cols, axis=1)


def soft_weighted_loss(bank: ViewBank, w: ParamSet, theta: ParamSet, tau: float,
                       probs: Tensor | None = None) -> Tensor:
    """``(1/B) sum_n sum_p probs[n, p] * loss_p(n)`` with gradients through
    both the scores and the encoder."""
    if probs is None:
        probs = pair_probabilities(bank, w, theta)
    losses = pair_loss_matrix(bank, w, tau)
    return ops.scale(ops.sum(ops.mul(probs, losses)), 1.0 / len(bank))


# --------------------------------------------------------------------------- gradients


def _grads(loss_fn, *paramsets):
    """Value of ``loss_fn()`` and one gradient dict per parameter set."""
    merged = paramsets[0]
    for p in paramsets[1:]:
        merged = merged.merged(p)
    with Tape():
        loss = loss_fn()
        g = backward(loss, merged)
    value = loss.item()
    return value, [{k: g[k] for k in p} for p in paramsets]


class GPAProblem:
    """Bi-level objective on one training and one validation minibatch."""

    def __init__(self, train_bank: ViewBank, valid_bank: ViewBank, tau: float):
        self.train_bank, self.valid_bank, self.tau = train_bank, valid_bank, tau
        self.last_train_loss = None
        self.last_valid_loss = None

    def train_w_grad(self, w, theta):
        value, (gw,) = _grads(lambda: hard_train_loss(self.train_bank, w, theta, self.tau), w)
        self.last_train_loss = value
        return gw

    def valid_grads(self, w, theta):
        value, (gw, gt) = _grads(
            lambda: soft_weighted_loss(self.valid_bank, w, theta, self.tau), w, theta)
        self.last_valid_loss = value
        return gw, gt

    def train_theta_grad(self, w, theta):
        _, (gt,) = _grads(lambda: soft_weighted_loss(self.train_bank, w, theta, self.tau), theta)
        return gt

    def train_w_grad_soft(self, w, theta):
        _, (gw,) = _grads(lambda: soft_weighted_loss(self.train_bank, w, theta, self.tau), w)
        return gw

    def size(self):
        return len(self.train_bank) + len(self.valid_bank)


class QuadraticStub:
    """``L_train = (w - theta)^2 / 2``, ``L_valid = w^2 / 2`` on scalars."""

    def train_w_grad(self, w, theta):
        return {"w": w["w"].data - theta["theta"].data}

    train_w_grad_soft = train_w_grad

    def valid_grads(self, w, theta):
        return {"w": w["w"].data.copy()}, {"theta": np.zeros_like(theta["theta"].data)}

    def train_theta_grad(self, w, theta):
        return {"theta": -(w["w"].data - theta["theta"].data)}

    def size(self):
        return 0


def _norm(g: dict) -> float:
    return math.sqrt(sum(float(np.sum(v * v)) for v in g.values()))


@dataclass
class Hypergradient:
    grad: dict
    direct: dict
    correction: dict
    eps: float
    v_norm: float


def hypergradient(problem, w: ParamSet, theta: ParamSet, xi: float, eps_scale: float = 0.01):
    """Finite-difference approximation of ``d L_valid(w'(theta), theta) / d theta``.

    ``w' = w - xi * grad_w L_train(w, theta)`` (virtual SGD step), ``v =
    grad_w L_valid(w', theta)``, ``eps = eps_scale / |v|``, and the result is
    ``grad_theta L_valid(w', theta) - xi * (grad_theta L_train(w + eps v) -
    grad_theta L_train(w - eps v)) / (2 eps)``.
    """
    w_virtual = sgd_step(w, problem.train_w_grad(w, theta), xi)
    v, direct = problem.valid_grads(w_virtual, theta)
    v_norm = _norm(v)
    if v_norm < 1e-12:
        log.info("validation gradient vanished; skipping the second-order term")
        zero = {k: np.zeros_like(g) for k, g in direct.items()}
        return Hypergradient(dict(direct), direct, zero, 0.0, v_norm)
    eps = eps_scale / v_norm
    g_plus = problem.train_theta_grad(w.axpy(eps, v), theta)
    g_minus = problem.train_theta_grad(w.axpy(-eps, v), theta)
    correction = {k: xi * (g_plus[k] - g_minus[k]) / (2 * eps) for k in direct}
    grad = {k: direct[k] - correction[k] for k in direct}
    return Hypergradient(grad, direct, correction, eps, v_norm)


def hypergradient_oracle(problem, w: ParamSet, theta: ParamSet, xi: float, h: float = 1e-6,
                         max_graphs: int = 10, max_hidden: int = 16) -> dict:
    """Reference for :func:`hypergradient` at toy scale.

    Differentiates through the virtual step directly: the Jacobian of
    ``grad_w L_train`` with respect to each ``theta`` coordinate comes from
    central differences of exact ``w``-gradients, and is contracted with the
    exact validation gradient. The ``theta``-dependence of the training loss
    is taken through its score-weighted form, as in the estimate.
    """
    if problem.size() > max_graphs:
        raise OracleTooExpensive(f"{problem.size()} graphs > {max_graphs}")
    if "gin0.lin1.weight" in w and w["gin0.lin1.weight"].shape[1] > max_hidden:
        raise OracleTooExpensive(f"hidden width {w['gin0.lin1.weight'].shape[1]} > {max_hidden}")
    w_virtual = sgd_step(w, problem.train_w_grad(w, theta), xi)
    v, direct = problem.valid_grads(w_virtual, theta)
    flat = theta.flat()
    out = np.zeros_like(flat)
    v_flat = np.concatenate([v[k].ravel() for k in w.names()])
    for i in range(flat.size):
        up, down = flat.copy(), flat.copy()
        up[i] += h
        down[i] -= h
        gp = problem.train_w_grad_soft(w, theta.with_flat(up))
        gm = problem.train_w_grad_soft(w, theta.with_flat(down))
        dgrad = np.concatenate([(gp[k] - gm[k]).ravel() for k in w.names()]) / (2 * h)
        out[i] = -xi * float(v_flat @ dgrad)
    total = np.concatenate([direct[k].ravel() for k in theta.names()]) + out
    return {k: t.data for k, t in theta.with_flat(total).items()}


# --------------------------------------------------------------------------- steps


def _apply(params: ParamSet, grads: dict, lr: float, opt: Adam | None) -> ParamSet:
    if opt is None:
        return sgd_step(params, grads, lr)
    return opt.step(params, grads)


def lower_step(state: TrainerState, problem, cfg: TrainConfig) -> TrainerState:
    """One optimiser step on ``w`` with ``theta`` frozen."""
    grads = problem.train_w_grad(state.w, state.theta)
    state.w = _apply(state.w, grads, cfg.lr_w, state.opt_w)
    return state


def upper_step(state: TrainerState, problem, cfg: TrainConfig) -> Hypergradient:
    """One optimiser step on ``theta`` along the hypergradient; ``w`` untouched."""
    hg = hypergradient(problem, state.w, state.theta, cfg.lr_w, cfg.eps_scale)
    state.theta = _apply(state.theta, hg.grad, cfg.lr_theta, state.opt_theta)
    return hg


def new_state(feature_dim: int, enc: EncoderConfig, cfg: TrainConfig, with_selector=True):
    if enc.feature_dim != feature_dim:
        raise ShapeError(f"encoder expects {enc.feature_dim} features, data has {feature_dim}")
    w = init_encoder(enc, cfg.seed)
    theta = init_score_net(enc.hidden_dim, cfg.score_hidden, cfg.seed) if with_selector else None
    adam = cfg.optimizer == "adam"
    return TrainerState(
        w=w,
        theta=theta,
        opt_w=Adam(cfg.lr_w) if adam else None,
        opt_theta=Adam(cfg.lr_theta) if adam and with_selector else None,
    )


def minibatches(indices, batch_size: int, seed: int, epoch: int):
    """Shuffled minibatches; a trailing batch of one graph joins its predecessor."""
    idx = np.asarray(indices, dtype=np.int64)
    idx = idx[RngStream(seed, 0, epoch, _SHUFFLE_SLOT).permutation(idx.shape[0])]
    batches = [idx[i:i + batch_size] for i in range(0, idx.shape[0], batch_size)]
    if len(batches) > 1 and batches[-1].shape[0] < 2:
        tail = batches.pop()
        batches[-1] = np.concatenate([batches[-1], tail])
    return batches


def _sample_valid(valid_indices, size: int, seed: int, epoch: int, step: int):
    v = np.asarray(valid_indices, dtype=np.int64)
    pick = RngStream(seed, step, epoch, _VALID_SLOT).sample(v.shape[0], size)
    return v[pick]


def train(dataset: GraphDataset, split: SplitSpec, enc: EncoderConfig, aug: AugConfig,
          cfg: TrainConfig, callback=None) -> TrainerState:
    """Alternate lower (``w``) and upper (``theta``) steps for ``cfg.epochs``
    passes over the training split."""
    if len(split.valid_indices) < 2:
        raise InsufficientBatch("validation split needs at least 2 graphs")
    state = new_state(dataset.feature_dim, enc, cfg)
    valid_size = min(cfg.batch_size, len(split.valid_indices))
    for epoch in range(cfg.epochs):
        state.epoch = epoch
        for batch in minibatches(split.train_indices, cfg.batch_size, cfg.seed, epoch):
            vbatch = _sample_valid(split.valid_indices, valid_size, cfg.seed, epoch, state.step)
            problem = GPAProblem(
                ViewBank([dataset[i] for i in batch], batch, aug, cfg.seed, epoch),
                ViewBank([dataset[i] for i in vbatch], vbatch, aug, cfg.seed, epoch),
                cfg.tau,
            )
            try:
                lower_step(state, problem, cfg)
                hg = upper_step(state, problem, cfg)
            except (NonFiniteGradient, ZeroNormError) as e:
                state.aborted = f"epoch {epoch} step {state.step}: {e}"
                log.error("training aborted: %s", state.aborted)
                return state
            row = {
                "epoch": epoch,
                "step": state.step,
                "train_loss": problem.last_train_loss,
                "valid_loss": problem.last_valid_loss,
                "theta_grad_norm": _norm(hg.grad),
            }
            state.loss_history.append(row)
            state.step += 1
            if callback is not None:
                callback(state, row)
        state.epoch = epoch + 1
    return state


def train_fixed(dataset: GraphDataset, train_indices, enc: EncoderConfig, aug: AugConfig,
                cfg: TrainConfig, pair_fn) -> TrainerState:
    """Lower-level-only contrastive training; ``pair_fn(graph_id, epoch)``
    gives each graph's pair index."""
    state = new_state(dataset.feature_dim, enc, cfg, with_selector=False)
    for epoch in range(cfg.epochs):
        state.epoch = epoch
        for batch in minibatches(train_indices, cfg.batch_size, cfg.seed, epoch):
            bank = ViewBank([dataset[i] for i in batch], batch, aug, cfg.seed, epoch)
            pairs = np.array([pair_fn(int(i), epoch) for i in batch])
            try:
                value, (g,) = _grads(lambda: hard_train_loss(bank, state.w, None, cfg.tau, pairs),
                                     state.w)
                state.w = _apply(state.w, g, cfg.lr_w, state.opt_w)
            except (NonFiniteGradient, ZeroNormError) as e:
                state.aborted = f"epoch {epoch} step {state.step}: {e}"
                return state
            state.loss_history.append({"epoch": epoch, "step": state.step, "train_loss": value,
                                       "valid_loss": None, "theta_grad_norm": None})
            state.step += 1
        state.epoch = epoch + 1
    return state


def random_pair(seed: int, graph_id: int, epoch: int) -> int:
    return RngStream(seed, graph_id, epoch, RANDOM_PAIR_SLOT).randint(NUM_PAIRS)


def train_random_baseline(dataset: GraphDataset, split: SplitSpec, enc: EncoderConfig,
                          aug: AugConfig, cfg: TrainConfig) -> TrainerState:
    """Same loop without a selector: every graph gets a uniformly random pair
    each epoch."""
    return train_fixed(dataset, split.train_indices, enc, aug, cfg,
                       lambda gid, epoch: random_pair(cfg.seed, gid, epoch))


# --------------------------------------------------------------------------- persistence


def write_loss_history(path, history) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        out = csv.writer(fh)
        out.writerow(["epoch", "step", "train_loss", "valid_loss", "theta_grad_norm"])
        for r in history:
            out.writerow([r["epoch"], r["step"]] + [
                "" if r[k] is None else repr(float(r[k]))
                for k in ("train_loss", "valid_loss", "theta_grad_norm")])


def save_checkpoint(state: TrainerState, directory, config: dict) -> None:
    os.makedirs(directory, exist_ok=True)
    state.w.save(os.path.join(directory, "w.bin"))
    if state.theta is not None:
        state.theta.save(os.path.join(directory, "theta.bin"))
    meta = {"epoch": state.epoch, "cfg": config, "rng_seed": config.get("train", {}).get("seed"),
            "aborted": state.aborted}
    with open(os.path.join(directory, "checkpoint.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)


def load_checkpoint(directory):
    """Returns ``(w, theta_or_None, metadata)``."""
    w = ParamSet.load(os.path.join(directory, "w.bin"))
    tpath = os.path.join(directory, "theta.bin")
    theta = ParamSet.load(tpath) if os.path.exists(tpath) else None
    with open(os.path.join(directory, "checkpoint.json"), encoding="utf-8") as fh:
        meta = json.load(fh)
    return w, theta, meta


def config_dict(cfg) -> dict:
    return asdict(cfg)
