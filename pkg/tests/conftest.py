import os
from pathlib import Path

import numpy as np
import pytest

from gpa.graph import Graph, GraphDataset, parse_tudataset

ROOT = Path(__file__).resolve().parent.parent
MUTAG_DIR = ROOT / "data" / "MUTAG"


def write_fixture(directory, name="TOY", node_labels=True):
    """Triangle (nodes 1-3, label 1) and a 2-node path (nodes 4-5, label 2)."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    (d / f"{name}_A.txt").write_text("1, 2\n2, 1\n2, 3\n3, 2\n1, 3\n3, 1\n4, 5\n5, 4\n")
    (d / f"{name}_graph_indicator.txt").write_text("1\n1\n1\n2\n2\n")
    (d / f"{name}_graph_labels.txt").write_text("1\n2\n")
    if node_labels:
        (d / f"{name}_node_labels.txt").write_text("0\n1\n2\n0\n1\n")
    return d


@pytest.fixture
def toy_dir(tmp_path):
    return write_fixture(tmp_path / "toy")


@pytest.fixture
def toy(toy_dir):
    return parse_tudataset(toy_dir, "TOY")


@pytest.fixture(scope="session")
def mutag():
    if not MUTAG_DIR.exists():
        pytest.skip("MUTAG data directory missing")
    return parse_tudataset(MUTAG_DIR, "MUTAG")


def random_graph(rng, n, p=0.3, feature_dim=3, label=0):
    iu, iv = np.triu_indices(n, 1)
    keep = rng.random(iu.shape[0]) < p
    edges = np.stack([iu[keep], iv[keep]], axis=1)
    return Graph.from_edges(n, edges, rng.normal(size=(n, feature_dim)), label)


def random_dataset(seed, count, n_range=(3, 9), feature_dim=3, classes=2):
    rng = np.random.default_rng(seed)
    graphs = tuple(random_graph(rng, int(rng.integers(*n_range)), 0.35, feature_dim,
                                int(k % classes)) for k in range(count))
    return GraphDataset("RAND", graphs, classes)


def pure_python_env():
    return {**os.environ, "GPA_PURE_PYTHON": "1"}


def toy_gpa_instance(seed, tau=0.2):
    """Five graphs (three train, two valid), one GIN layer of width 4, score
    net of width 4. Biases are drawn away from zero so that masked all-zero
    rows do not sit exactly on a ReLU kink."""
    from gpa.augment import AugConfig
    from gpa.autodiff import ParamSet
    from gpa.encoder import EncoderConfig, init_encoder
    from gpa.selector import init_score_net
    from gpa.trainer import GPAProblem
    from gpa.views import ViewBank

    ds = random_dataset(seed, 5, (3, 7))
    w = init_encoder(EncoderConfig(ds.feature_dim, 1, 4), seed)
    rng = np.random.default_rng(seed + 100)
    w = ParamSet({k: t.data + 0.5 * rng.uniform(-1, 1, size=t.shape) if k.endswith("bias")
                  else t.data for k, t in w.items()})
    theta = init_score_net(4, 4, seed)
    aug = AugConfig()
    prob = GPAProblem(ViewBank(ds.graphs[:3], [0, 1, 2], aug, seed, 0),
                      ViewBank(ds.graphs[3:], [3, 4], aug, seed, 0), tau)
    return prob, w, theta


def relu_flips(prob, w, theta, xi, eps_scale):
    """Number of ReLU units whose on/off state differs between the two
    probe points ``w +- eps v`` of the finite-difference hypergradient.
    Zero means the difference quotient is taken inside one smooth piece.
    Returns -1 when the validation gradient vanishes."""
    from gpa.autodiff import ops, sgd_step
    from gpa.trainer import _norm

    v, _ = prob.valid_grads(sgd_step(w, prob.train_w_grad(w, theta), xi), theta)
    n = _norm(v)
    if n == 0.0:
        return -1
    eps = eps_scale / n
    relu = ops.relu
    patterns = []
    for sign in (1.0, -1.0):
        masks = []

        def recording(x):
            masks.append(np.asarray(getattr(x, "data", x)) > 0)
            return relu(x)

        ops.relu = recording
        try:
            prob.train_theta_grad(w.axpy(sign * eps, v), theta)
        finally:
            ops.relu = relu
        patterns.append(masks)
    return sum(int((a != b).sum()) for a, b in zip(*patterns))


def flat(grads, names):
    return np.concatenate([np.asarray(grads[k]).ravel() for k in names])
