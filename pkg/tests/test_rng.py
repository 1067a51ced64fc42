import numpy as np

from gpa.rng import RngStream, hash64, mix64, uniform_at


def test_same_key_same_stream():
    a, b = RngStream(1, 2, 3, 4), RngStream(1, 2, 3, 4)
    assert np.array_equal(a.uniforms(50), b.uniforms(50))


def test_different_keys_differ():
    base = RngStream(1, 2, 3, 4).uniforms(8)
    for other in [(0, 2, 3, 4), (1, 0, 3, 4), (1, 2, 0, 4), (1, 2, 3, 0)]:
        assert not np.array_equal(base, RngStream(*other).uniforms(8))


def test_vector_and_scalar_paths_agree():
    s = RngStream(7, 1, 0, 2)
    vec = s.uniforms(20)
    assert s.counter == 20
    assert all(vec[i] == uniform_at(s.key, i) for i in range(20))
    t = RngStream(7, 1, 0, 2)
    assert [t.uniform() for _ in range(20)] == list(vec)


def test_chunking_does_not_matter():
    a = RngStream(3)
    b = RngStream(3)
    assert np.array_equal(np.concatenate([a.uniforms(5), a.uniforms(7)]), b.uniforms(12))


def test_range_and_moments():
    u = RngStream(5).uniforms(200000)
    assert u.min() >= 0.0 and u.max() < 1.0
    assert abs(u.mean() - 0.5) < 0.005
    assert abs(u.var() - 1 / 12) < 0.002


def test_sample_and_permutation():
    s = RngStream(9)
    p = s.permutation(30)
    assert sorted(p.tolist()) == list(range(30))
    k = s.sample(30, 7)
    assert len(set(k.tolist())) == 7 and np.all(np.diff(k) > 0)
    assert all(0 <= s.randint(4) < 4 for _ in range(100))


def test_randint_uniform():
    s = RngStream(2)
    counts = np.bincount([s.randint(15) for _ in range(15000)], minlength=15)
    assert np.all(np.abs(counts / 15000 - 1 / 15) < 0.01)


def test_mix_is_64_bit():
    assert 0 <= mix64(2**70) < 2**64
    assert 0 <= hash64(-1, 2**65) < 2**64
