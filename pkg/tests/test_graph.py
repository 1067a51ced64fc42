import numpy as np
import pytest

import gpa.graph as graph_mod
from gpa.errors import (
    CrossGraphEdge,
    DegenerateSplit,
    FormatMissing,
    MissingNodeLabels,
    ParseError,
    TooManyFolds,
)
from gpa.graph import (
    Graph,
    GraphDataset,
    build_features,
    kfold,
    parse_tudataset,
    split,
    stats,
    write_tudataset,
)

from conftest import random_dataset, write_fixture


def test_fixture_stats(toy):
    s = stats(toy)
    assert (s.num_graphs, s.avg_nodes, s.avg_edges, s.num_classes) == (2, 2.5, 2.0, 2)


def test_fixture_structure(toy):
    tri, path = toy.graphs
    assert tri.num_nodes == 3 and tri.num_edges == 3
    assert path.num_nodes == 2 and path.num_edges == 1
    assert [g.label for g in toy.graphs] == [0, 1]
    assert np.array_equal(tri.offsets, [0, 2, 4, 6])
    assert tri.neighbors.shape[0] == 2 * tri.num_edges
    # default features: one-hot node labels {0, 1, 2}
    assert toy.feature_dim == 3
    assert np.array_equal(tri.features, np.eye(3))


def test_single_node_empty_edges(tmp_path):
    d = tmp_path / "one"
    d.mkdir()
    (d / "ONE_A.txt").write_text("")
    (d / "ONE_graph_indicator.txt").write_text("1\n")
    (d / "ONE_graph_labels.txt").write_text("0\n")
    ds = parse_tudataset(d, "ONE")
    s = stats(ds)
    assert (s.num_graphs, s.avg_nodes, s.avg_edges) == (1, 1.0, 0.0)
    assert ds.graphs[0].num_edges == 0


@pytest.mark.parametrize("missing", ["A", "graph_indicator", "graph_labels"])
def test_missing_file(toy_dir, missing):
    (toy_dir / f"TOY_{missing}.txt").unlink()
    with pytest.raises(FormatMissing):
        parse_tudataset(toy_dir, "TOY")


def test_parse_error_reports_line(toy_dir):
    (toy_dir / "TOY_A.txt").write_text("1, 2\n2, 1\n2, x\n")
    with pytest.raises(ParseError) as info:
        parse_tudataset(toy_dir, "TOY")
    assert info.value.line == 3
    assert "3" in str(info.value)


def test_cross_graph_edge(toy_dir):
    with open(toy_dir / "TOY_A.txt", "a") as fh:
        fh.write("3, 4\n4, 3\n")
    with pytest.raises(CrossGraphEdge):
        parse_tudataset(toy_dir, "TOY")


def test_duplicates_and_self_loops(toy_dir):
    with open(toy_dir / "TOY_A.txt", "a") as fh:
        fh.write("1, 2\n2, 2\n")
    before = graph_mod.self_loops_dropped
    ds = parse_tudataset(toy_dir, "TOY")
    assert graph_mod.self_loops_dropped == before + 1
    assert ds.graphs[0].num_edges == 3
    assert all(g.is_valid() for g in ds.graphs)


def test_whitespace_separators(toy_dir):
    (toy_dir / "TOY_A.txt").write_text("1 2\n2\t1\n2 3\n3 2\n1 3\n3 1\n4 5\n5 4\n")
    assert stats(parse_tudataset(toy_dir, "TOY")).avg_edges == 2.0


def test_labels_remapped_by_sorted_value(toy_dir):
    (toy_dir / "TOY_graph_labels.txt").write_text("7\n-1\n")
    ds = parse_tudataset(toy_dir, "TOY")
    assert [g.label for g in ds.graphs] == [1, 0]
    assert ds.label_values == (-1, 7)


def test_attributes_concatenated(toy_dir):
    (toy_dir / "TOY_node_attributes.txt").write_text("0.5\n1.5\n2.5\n3.5\n4.5\n")
    ds = parse_tudataset(toy_dir, "TOY")
    assert ds.feature_dim == 4
    assert np.allclose(ds.graphs[1].features, [[1, 0, 0, 3.5], [0, 1, 0, 4.5]])


def test_round_trip(toy, tmp_path):
    write_tudataset(toy, tmp_path / "rt")
    again = parse_tudataset(tmp_path / "rt", "TOY")
    assert again.graphs == toy.graphs
    assert again.num_classes == toy.num_classes


def test_round_trip_mutag(mutag, tmp_path):
    write_tudataset(mutag, tmp_path / "rt")
    again = parse_tudataset(tmp_path / "rt", "MUTAG")
    assert again.graphs == mutag.graphs


def test_mutag_all_graphs_valid(mutag):
    for g in mutag.graphs:
        assert g.is_valid()
        src = np.repeat(np.arange(g.num_nodes), g.degrees())
        pairs = set(zip(src.tolist(), g.neighbors.tolist()))
        assert all((v, u) in pairs for u, v in pairs)
        assert all(u != v for u, v in pairs)
        assert len(pairs) == g.neighbors.shape[0]


def test_mutag_stats(mutag):
    s = stats(mutag)
    assert s.num_graphs == 188 and s.num_classes == 2
    assert abs(s.avg_nodes - 17.93) <= 0.01
    assert abs(s.avg_edges - 19.79) <= 0.01


# --------------------------------------------------------------------------- features


def test_one_hot_labels(toy):
    ds = build_features(toy, "one_hot_labels")
    assert ds.feature_dim == 3
    for g in ds.graphs:
        assert np.all(g.features.sum(axis=1) == 1.0)


def test_one_hot_labels_requires_labels(tmp_path):
    ds = parse_tudataset(write_fixture(tmp_path / "nl", node_labels=False), "TOY")
    assert ds.feature_dim == 0
    with pytest.raises(MissingNodeLabels):
        build_features(ds, "one_hot_labels")


def test_one_hot_degree(toy):
    ds = build_features(toy, "one_hot_degree", cap=4)
    assert ds.feature_dim == 5
    assert np.all(ds.graphs[0].features[:, 2] == 1.0)
    assert np.all(ds.graphs[0].features.sum(axis=1) == 1.0)
    assert np.all(ds.graphs[1].features[:, 1] == 1.0)


def test_one_hot_degree_cap_bucket():
    star = Graph.from_edges(8, [(0, k) for k in range(1, 8)], np.zeros((8, 1)), 0)
    ds = build_features(GraphDataset("S", (star,), 1), "one_hot_degree", cap=4)
    assert ds.graphs[0].features[0, 4] == 1.0
    assert ds.graphs[0].features[1, 1] == 1.0


# --------------------------------------------------------------------------- splits


def test_split_mutag_sizes():
    sp = split(188, 0.1, 0)
    assert len(sp.valid_indices) == 19 and len(sp.train_indices) == 169
    assert sorted(np.concatenate([sp.train_indices, sp.valid_indices]).tolist()) == list(range(188))


def test_split_half():
    sp = split(10, 0.5, 3)
    assert len(sp.valid_indices) == 5 and len(sp.train_indices) == 5


def test_split_deterministic():
    a, b = split(50, 0.2, 11), split(50, 0.2, 11)
    assert np.array_equal(a.valid_indices, b.valid_indices)
    assert np.array_equal(a.train_indices, b.train_indices)
    assert not np.array_equal(a.valid_indices, split(50, 0.2, 12).valid_indices)


@pytest.mark.parametrize("n,frac", [(10, 0.01), (10, 0.99), (5, 0.0), (5, 1.0)])
def test_split_degenerate(n, frac):
    with pytest.raises(DegenerateSplit):
        split(n, frac, 0)


def test_split_uniform():
    counts = np.zeros(10)
    for s in range(2000):
        counts[split(10, 0.3, s).valid_indices] += 1
    assert np.all(np.abs(counts / 2000 - 0.3) < 0.04)


def test_kfold_even():
    folds = kfold(np.arange(100), 10, 0)
    assert [len(t) for _, t in folds] == [10] * 10


def test_kfold_remainder():
    folds = kfold(np.arange(103), 10, 0)
    sizes = sorted(len(t) for _, t in folds)
    assert sizes == [10] * 7 + [11] * 3


def test_kfold_partition():
    idx = np.arange(5, 42)
    folds = kfold(idx, 6, 9)
    tests = np.concatenate([t for _, t in folds])
    assert sorted(tests.tolist()) == idx.tolist()
    for train, test in folds:
        assert not set(train) & set(test)
        assert sorted(np.concatenate([train, test]).tolist()) == idx.tolist()
    again = kfold(idx, 6, 9)
    assert all(np.array_equal(a[1], b[1]) for a, b in zip(folds, again))


def test_kfold_too_many():
    with pytest.raises(TooManyFolds):
        kfold(np.arange(3), 4, 0)


def test_dataset_invariants():
    ds = random_dataset(0, 5)
    assert len(ds) == 5 and ds.feature_dim == 3
    assert np.all(ds.labels() < ds.num_classes)
    with pytest.raises(ValueError):
        GraphDataset("E", (), 1)
