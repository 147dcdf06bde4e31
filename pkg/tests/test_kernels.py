"""Backend parity: the numba kernels and the pure-numpy fallbacks must
agree on identical inputs."""

import numpy as np
import pytest

from quakegrade import _kernels_numpy as knp

knb = pytest.importorskip("quakegrade._kernels_numba")


def _random_case(rng, n=40, d=4, C=3):
    X = rng.standard_normal((n, d))
    y = rng.integers(0, C, n)
    return np.ascontiguousarray(X), y.astype(np.int64)


def test_best_split_gini_parity():
    rng = np.random.default_rng(0)
    for _ in range(50):
        X, y = _random_case(rng)
        w = np.ones(y.size)
        a = knb.best_split_gini(X, y, w, 3)
        b = knp.best_split_gini(X, y, w, 3)
        assert a[0] == b[0]
        assert a[1] == b[1]
        assert a[2] == b[2]


def test_best_split_gini_weighted_parity():
    rng = np.random.default_rng(1)
    for _ in range(20):
        X, y = _random_case(rng, n=30)
        w = rng.uniform(0.1, 2.0, y.size)
        a = knb.best_split_gini(X, y, w, 3)
        b = knp.best_split_gini(X, y, w, 3)
        assert a[0] == b[0]
        assert a[1] == b[1]
        assert a[2] == pytest.approx(b[2], abs=1e-12)


def test_best_split_gini_constant_columns():
    X = np.ones((10, 3))
    y = np.array([0, 1] * 5, dtype=np.int64)
    w = np.ones(10)
    for impl in (knb, knp):
        f, thr, gain = impl.best_split_gini(X, y, w, 2)
        assert f == -1


def test_best_split_sse_parity():
    rng = np.random.default_rng(2)
    for _ in range(50):
        X = np.ascontiguousarray(rng.standard_normal((35, 3)))
        t = rng.standard_normal(35)
        a = knb.best_split_sse(X, t)
        b = knp.best_split_sse(X, t)
        assert a[0] == b[0]
        assert a[1] == b[1]
        assert a[2] == b[2]


def _random_tree(rng, n_nodes=15):
    # random full binary tree over feature space [0, 1]^3
    feat = np.full(n_nodes, -1, dtype=np.int64)
    thr = np.zeros(n_nodes)
    left = np.full(n_nodes, -1, dtype=np.int64)
    right = np.full(n_nodes, -1, dtype=np.int64)
    nodes = [0]
    next_free = 1
    while nodes and next_free + 1 < n_nodes:
        node = nodes.pop(0)
        feat[node] = rng.integers(0, 3)
        thr[node] = rng.random()
        left[node] = next_free
        right[node] = next_free + 1
        nodes.extend([next_free, next_free + 1])
        next_free += 2
    return feat, thr, left, right


def test_tree_apply_parity():
    rng = np.random.default_rng(3)
    feat, thr, left, right = _random_tree(rng)
    X = rng.random((100, 3))
    a = knb.tree_apply(feat, thr, left, right, X)
    b = knp.tree_apply(feat, thr, left, right, X)
    np.testing.assert_array_equal(a, b)


def test_iforest_path_sum_parity():
    rng = np.random.default_rng(4)
    parts = [_random_tree(rng, n_nodes=2 * k + 1) for k in (3, 5, 7)]
    feat = np.concatenate([p[0] for p in parts])
    thr = np.concatenate([p[1] for p in parts])
    offsets = np.cumsum([0] + [p[0].size for p in parts]).astype(np.int64)
    left = np.concatenate(
        [np.where(p[2] >= 0, p[2] + off, -1) for p, off in zip(parts, offsets)]
    ).astype(np.int64)
    right = np.concatenate(
        [np.where(p[3] >= 0, p[3] + off, -1) for p, off in zip(parts, offsets)]
    ).astype(np.int64)
    adjust = rng.random(feat.size)
    X = rng.random((60, 3))
    a = knb.iforest_path_sum(feat, thr, left, right, adjust, offsets, X)
    b = knp.iforest_path_sum(feat, thr, left, right, adjust, offsets, X)
    np.testing.assert_array_equal(a, b)


def test_knn_parity_and_ties():
    rng = np.random.default_rng(5)
    X = np.ascontiguousarray(rng.standard_normal((50, 4)))
    a = knb.knn_indices(X, 5)
    b = knp.knn_indices(X, 5)
    np.testing.assert_array_equal(a, b)

    # exact duplicates: ties resolve toward the lower row index
    Xd = np.zeros((4, 2))
    Xd[3] = [10.0, 10.0]
    for impl in (knb, knp):
        nb = impl.knn_indices(np.ascontiguousarray(Xd), 2)
        np.testing.assert_array_equal(nb[0], [1, 2])
        np.testing.assert_array_equal(nb[1], [0, 2])
        np.testing.assert_array_equal(nb[3], [0, 1])


def test_backend_facade_reports_name():
    from quakegrade import kernels

    assert kernels.backend_name() in ("numba", "numpy")
