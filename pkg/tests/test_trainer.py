import math

import numpy as np
import pytest

from gpa.augment import NUM_PAIRS, AugConfig
from gpa.autodiff import ParamSet, Tape, Tensor, backward
from gpa.encoder import EncoderConfig, embed_graphs, init_encoder
from gpa.errors import InsufficientBatch, OracleTooExpensive, ZeroNormError
from gpa.graph import SplitSpec, split
from gpa.selector import init_score_net, pair_probabilities
from gpa.trainer import (
    GPAProblem,
    QuadraticStub,
    TrainConfig,
    TrainerState,
    hard_train_loss,
    hypergradient,
    hypergradient_oracle,
    load_checkpoint,
    lower_step,
    minibatches,
    ntxent_loss,
    pair_loss_matrix,
    random_pair,
    save_checkpoint,
    soft_weighted_loss,
    train,
    train_random_baseline,
    upper_step,
    write_loss_history,
)
from gpa.views import ViewBank

from conftest import flat, random_dataset, relu_flips, toy_gpa_instance

AUG = AugConfig()


def reference_ntxent(zi, zj, tau):
    total = 0.0
    b = zi.shape[0]
    for n in range(b):
        a = zi[n] / np.linalg.norm(zi[n])
        pos = a @ (zj[n] / np.linalg.norm(zj[n])) / tau
        negs = [math.exp(a @ (zj[m] / np.linalg.norm(zj[m])) / tau) for m in range(b) if m != n]
        total += -pos + math.log(sum(negs))
    return total / b


# --------------------------------------------------------------------------- contrastive loss


def test_ntxent_hand_case():
    z = np.eye(2)
    assert abs(ntxent_loss(z, z, 1.0).item() - (-1.0)) < 1e-12


def test_ntxent_matches_double_loop():
    rng = np.random.default_rng(7)
    for k in range(50):
        b = (2, 3, 8)[k % 3]
        zi, zj = rng.normal(size=(b, 5)), rng.normal(size=(b, 5))
        tau = float(rng.uniform(0.1, 2.0))
        assert abs(ntxent_loss(zi, zj, tau).item() - reference_ntxent(zi, zj, tau)) < 1e-9


def test_ntxent_identical_rows():
    z = np.ones((4, 3))
    assert abs(ntxent_loss(z, z, 0.5).item() - math.log(3)) < 1e-12


def test_ntxent_scale_invariant():
    rng = np.random.default_rng(0)
    zi, zj = rng.normal(size=(5, 4)), rng.normal(size=(5, 4))
    assert ntxent_loss(zi, zj, 0.2).item() == pytest.approx(
        ntxent_loss(3.0 * zi, 0.5 * zj, 0.2).item(), abs=1e-12)


def test_ntxent_errors():
    with pytest.raises(InsufficientBatch):
        ntxent_loss(np.ones((1, 3)), np.ones((1, 3)), 0.2)
    z = np.ones((3, 2))
    z[1] = 0.0
    with pytest.raises(ZeroNormError):
        ntxent_loss(z, np.ones((3, 2)), 0.2)


def test_ntxent_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    zi, zj = rng.normal(size=(4, 3)), rng.normal(size=(4, 3))
    p = ParamSet({"a": zi})
    with Tape():
        g = backward(ntxent_loss(p["a"], Tensor(zj), 0.3), p)["a"]
    fd = np.zeros_like(zi)
    for idx in np.ndindex(*zi.shape):
        up, dn = zi.copy(), zi.copy()
        up[idx] += 1e-6
        dn[idx] -= 1e-6
        fd[idx] = (reference_ntxent(up, zj, 0.3) - reference_ntxent(dn, zj, 0.3)) / 2e-6
    assert np.max(np.abs(g - fd)) < 1e-7


# --------------------------------------------------------------------------- train losses


@pytest.fixture(scope="module")
def bank_setup():
    ds = random_dataset(4, 5, (4, 9))
    w = init_encoder(EncoderConfig(ds.feature_dim, 2, 6), 1)
    theta = init_score_net(6, 5, 1)
    bank = ViewBank(ds.graphs, range(5), AUG, 3, 0)
    return ds, w, theta, bank


def test_hard_loss_identical_pair(bank_setup):
    ds, w, _, bank = bank_setup
    loss = hard_train_loss(bank, w, None, 0.2, pairs=np.zeros(5, dtype=int))
    from gpa.encoder import GraphBatch
    z = embed_graphs(GraphBatch.from_graphs(ds.graphs), w).data
    assert loss.item() == pytest.approx(ntxent_loss(z, z, 0.2).item(), abs=1e-12)


def test_hard_loss_on_copies_is_log_b_minus_one():
    ds = random_dataset(2, 1, (5, 6))
    w = init_encoder(EncoderConfig(ds.feature_dim, 2, 6), 0)
    bank = ViewBank([ds[0]] * 4, [0, 0, 0, 0], AUG, 0, 0)
    loss = hard_train_loss(bank, w, None, 0.2, pairs=np.zeros(4, dtype=int))
    assert abs(loss.item() - math.log(3)) < 1e-12


def test_soft_loss_one_hot_equals_hard(bank_setup):
    _, w, theta, bank = bank_setup
    for p in (0, 4, 14):
        probs = np.zeros((5, NUM_PAIRS))
        probs[:, p] = 1.0
        soft = soft_weighted_loss(bank, w, theta, 0.2, probs=Tensor(probs)).item()
        hard = hard_train_loss(bank, w, theta, 0.2, pairs=np.full(5, p)).item()
        assert abs(soft - hard) < 1e-10


def test_soft_loss_uniform_is_mean_of_columns(bank_setup):
    _, w, theta, bank = bank_setup
    probs = np.full((5, NUM_PAIRS), 1.0 / NUM_PAIRS)
    soft = soft_weighted_loss(bank, w, theta, 0.2, probs=Tensor(probs)).item()
    assert abs(soft - pair_loss_matrix(bank, w, 0.2).data.mean()) < 1e-12


def test_soft_loss_theta_gradient(bank_setup):
    _, w, theta, bank = bank_setup

    def value(t):
        return soft_weighted_loss(bank, w, t, 0.2).item()

    with Tape():
        g = flat(backward(soft_weighted_loss(bank, w, theta, 0.2), theta), theta.names())
    x = theta.flat()
    rng = np.random.default_rng(0)
    for i in rng.choice(x.size, 25, replace=False):
        up, dn = x.copy(), x.copy()
        up[i] += 1e-6
        dn[i] -= 1e-6
        fd = (value(theta.with_flat(up)) - value(theta.with_flat(dn))) / 2e-6
        assert abs(fd - g[i]) <= 1e-4 * max(1.0, abs(fd))


def test_hard_loss_ignores_theta(bank_setup):
    _, w, theta, bank = bank_setup
    with Tape():
        g = backward(hard_train_loss(bank, w, theta, 0.2), w.merged(theta))
    assert all(np.all(g[k] == 0) for k in theta)


# --------------------------------------------------------------------------- hypergradient


def scalar_params(name, value):
    return ParamSet({name: np.array([value])})


def test_quadratic_stub_hypergradient_and_oracle():
    w, theta = scalar_params("w", 1.0), scalar_params("theta", 0.0)
    hg = hypergradient(QuadraticStub(), w, theta, 0.1, 0.01)
    assert abs(hg.grad["theta"][0] - 0.09) < 1e-10
    exact = hypergradient_oracle(QuadraticStub(), w, theta, 0.1)
    assert abs(exact["theta"][0] - 0.09) < 1e-10


@pytest.mark.parametrize("eps_scale", [1e-1, 1e-2, 1e-3])
def test_quadratic_stub_is_exact_for_any_eps(eps_scale):
    hg = hypergradient(QuadraticStub(), scalar_params("w", 1.0), scalar_params("theta", 0.0),
                       0.1, eps_scale)
    assert abs(hg.grad["theta"][0] - 0.09) < 1e-10


def test_lower_and_upper_steps_with_sgd():
    cfg = TrainConfig(lr_w=0.1, lr_theta=0.1, optimizer="sgd")
    state = TrainerState(scalar_params("w", 1.0), scalar_params("theta", 0.5))
    theta_before = state.theta["theta"].data.copy()
    lower_step(state, QuadraticStub(), cfg)
    assert state.w["w"].data[0] == pytest.approx(0.95, abs=1e-15)
    assert np.array_equal(state.theta["theta"].data, theta_before)

    state = TrainerState(scalar_params("w", 1.0), scalar_params("theta", 0.0))
    upper_step(state, QuadraticStub(), cfg)
    assert state.theta["theta"].data[0] == pytest.approx(-0.009, abs=1e-12)
    assert state.w["w"].data[0] == 1.0


class ThetaFreeStub(QuadraticStub):
    def train_theta_grad(self, w, theta):
        return {"theta": np.zeros_like(theta["theta"].data)}


def test_theta_independent_training_loss_has_no_correction():
    hg = hypergradient(ThetaFreeStub(), scalar_params("w", 1.0), scalar_params("theta", 0.0),
                       0.1, 0.01)
    assert hg.correction["theta"][0] == 0.0
    assert hg.grad["theta"][0] == hg.direct["theta"][0]


def test_vanishing_validation_gradient_skips_correction():
    hg = hypergradient(QuadraticStub(), scalar_params("w", 0.0), scalar_params("theta", 0.0),
                       0.1, 0.01)
    assert hg.v_norm == 0.0 and hg.correction["theta"][0] == 0.0


def test_oracle_rejects_large_instances():
    ds = random_dataset(0, 12, (3, 5))
    w = init_encoder(EncoderConfig(ds.feature_dim, 1, 4), 0)
    theta = init_score_net(4, 4, 0)
    big = GPAProblem(ViewBank(ds.graphs[:8], range(8), AUG, 0, 0),
                     ViewBank(ds.graphs[8:], range(8, 12), AUG, 0, 0), 0.2)
    with pytest.raises(OracleTooExpensive):
        hypergradient_oracle(big, w, theta, 0.1)
    wide = init_encoder(EncoderConfig(ds.feature_dim, 1, 32), 0)
    small = GPAProblem(ViewBank(ds.graphs[:3], range(3), AUG, 0, 0),
                       ViewBank(ds.graphs[3:5], range(3, 5), AUG, 0, 0), 0.2)
    with pytest.raises(OracleTooExpensive):
        hypergradient_oracle(small, wide, init_score_net(32, 4, 0), 0.1)


def test_relu_flip_counter_detects_kinks():
    prob, w, theta = toy_gpa_instance(1)
    assert relu_flips(prob, w, theta, 0.1, 1e-2) == 0
    assert relu_flips(prob, w, theta, 0.1, 1e-1) > 0


@pytest.mark.slow
def test_fd_hypergradient_converges_to_oracle_on_smooth_toy():
    prob, w, theta = toy_gpa_instance(1)
    exact = flat(hypergradient_oracle(prob, w, theta, 0.1), theta.names())
    errs = []
    for es in (1e-1, 1e-2, 1e-3):
        fd = flat(hypergradient(prob, w, theta, 0.1, es).grad, theta.names())
        errs.append(np.linalg.norm(fd - exact) / (np.linalg.norm(exact) + 1e-12))
    assert errs[1] < 1e-3
    assert errs[0] > errs[1] > errs[2]


# --------------------------------------------------------------------------- training loop


def toy_setup(count=6, seed=0):
    ds = random_dataset(seed, count, (4, 8))
    enc = EncoderConfig(ds.feature_dim, 2, 8)
    return ds, enc


def test_minibatches_merge_trailing_singleton():
    batches = minibatches(range(9), 4, 0, 0)
    assert [b.shape[0] for b in batches] == [4, 5]
    assert sorted(np.concatenate(batches).tolist()) == list(range(9))
    assert [b.shape[0] for b in minibatches(range(8), 4, 0, 0)] == [4, 4]


def test_minibatches_reshuffle_per_epoch():
    a = np.concatenate(minibatches(range(30), 8, 0, 0))
    b = np.concatenate(minibatches(range(30), 8, 0, 1))
    assert not np.array_equal(a, b)
    assert np.array_equal(a, np.concatenate(minibatches(range(30), 8, 0, 0)))


def run_toy(seed, epochs=1):
    ds, enc = toy_setup()
    cfg = TrainConfig(batch_size=4, epochs=epochs, score_hidden=6, seed=seed)
    return train(ds, split(ds, 0.34, seed), enc, AUG, cfg)


def test_training_is_bitwise_deterministic():
    a, b = run_toy(5), run_toy(5)
    assert a.loss_history == b.loss_history
    assert a.w.allclose(b.w) and a.theta.allclose(b.theta)
    assert a.aborted is None
    c = run_toy(6)
    assert c.loss_history != a.loss_history


def test_long_toy_run_stays_finite():
    ds, enc = toy_setup()
    cfg = TrainConfig(batch_size=4, epochs=50, score_hidden=6, lr_w=1e-2, lr_theta=1e-2)
    seen = []
    state = train(ds, split(ds, 0.34, 0), enc, AUG, cfg,
                  callback=lambda s, row: seen.append(s.w.all_finite() and s.theta.all_finite()))
    assert state.aborted is None
    assert len(seen) == 50 and all(seen)
    assert all(math.isfinite(r["train_loss"]) for r in state.loss_history)


def test_train_rejects_tiny_validation_split():
    ds, enc = toy_setup()
    sp = SplitSpec(np.arange(5), np.array([5]), 0)
    with pytest.raises(InsufficientBatch):
        train(ds, sp, enc, AUG, TrainConfig(batch_size=4, epochs=1, score_hidden=4))


def test_random_pair_is_uniform():
    counts = np.bincount([random_pair(0, g, e) for g in range(10) for e in range(1500)],
                         minlength=NUM_PAIRS) / 15000
    assert np.all(np.abs(counts - 1 / NUM_PAIRS) < 0.02)


def test_random_baseline_trains_without_selector():
    ds, enc = toy_setup()
    state = train_random_baseline(ds, split(ds, 0.34, 0), enc, AUG,
                                  TrainConfig(batch_size=4, epochs=2))
    assert state.theta is None and state.epoch == 2
    assert all(r["valid_loss"] is None for r in state.loss_history)


def test_checkpoint_round_trip(tmp_path):
    state = run_toy(0)
    save_checkpoint(state, tmp_path / "ckpt", {"train": {"seed": 0}})
    w, theta, meta = load_checkpoint(tmp_path / "ckpt")
    assert w.allclose(state.w) and theta.allclose(state.theta)
    assert meta["epoch"] == 1 and meta["rng_seed"] == 0 and meta["aborted"] is None
    write_loss_history(tmp_path / "loss.csv", state.loss_history)
    lines = (tmp_path / "loss.csv").read_text().splitlines()
    assert lines[0] == "epoch,step,train_loss,valid_loss,theta_grad_norm"
    assert len(lines) == 1 + len(state.loss_history)
    assert float(lines[1].split(",")[2]) == state.loss_history[0]["train_loss"]


def test_selector_probabilities_move_during_training():
    ds, enc = toy_setup()
    cfg = TrainConfig(batch_size=4, epochs=3, score_hidden=6, lr_theta=1e-2)
    sp = split(ds, 0.34, 0)
    state = train(ds, sp, enc, AUG, cfg)
    bank = ViewBank([ds[i] for i in sp.train_indices], sp.train_indices, AUG, 0, 0)
    theta0 = init_score_net(enc.hidden_dim, 6, 0)
    p0 = pair_probabilities(bank, state.w, theta0).data
    p1 = pair_probabilities(bank, state.w, state.theta).data
    assert not np.allclose(p0, p1)
