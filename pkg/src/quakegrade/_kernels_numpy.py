"""Pure-numpy kernel implementations.

Fallback backend used when numba is unavailable or disabled via the
``QUAKEGRADE_NUMBA=0`` environment flag. Each function mirrors the numba
twin in `_kernels_numba` operation-for-operation (same accumulation order,
same tie rules) so the two backends agree bit-for-bit on untied inputs.
"""

from __future__ import annotations

import numpy as np


def best_split_gini(values, y, w, n_classes):
    """Exhaustive weighted-Gini split search over the given columns.

    Candidate thresholds are midpoints of consecutive distinct sorted
    values. Returns (local feature index, threshold, impurity decrease);
    feature -1 when every column is constant. Ties prefer the lower
    feature index, then the lower threshold.
    """
    n, m = values.shape
    wtot = np.cumsum(w)
    W = wtot[-1]
    tot = np.empty(n_classes)
    for c in range(n_classes):
        tot[c] = np.cumsum(np.where(y == c, w, 0.0))[-1]
    s = 0.0
    for c in range(n_classes):
        p = tot[c] / W
        s += p * p
    parent = 1.0 - s

    best_f = -1
    best_thr = np.nan
    best_gain = -np.inf
    for f in range(m):
        col = values[:, f]
        order = np.argsort(col)
        vs = col[order]
        valid = vs[1:] > vs[:-1]
        if not valid.any():
            continue
        ws = w[order]
        ys = y[order]
        wl = np.cumsum(ws)[:-1]
        wr = W - wl
        ok = valid & (wl > 0.0) & (wr > 0.0)
        if not ok.any():
            continue
        onehot = np.zeros((n, n_classes))
        onehot[np.arange(n), ys] = ws
        leftc = np.cumsum(onehot, axis=0)[:-1]
        with np.errstate(divide="ignore", invalid="ignore"):
            sl = np.zeros(n - 1)
            sr = np.zeros(n - 1)
            for c in range(n_classes):
                pl = leftc[:, c] / wl
                sl += pl * pl
                pr = (tot[c] - leftc[:, c]) / wr
                sr += pr * pr
            gains = parent - (wl / W) * (1.0 - sl) - (wr / W) * (1.0 - sr)
        gains = np.where(ok, gains, -np.inf)
        b = int(np.argmax(gains))
        if gains[b] > best_gain:
            best_gain = gains[b]
            best_f = f
            best_thr = 0.5 * (vs[b] + vs[b + 1])
    return best_f, best_thr, best_gain


def best_split_sse(values, target):
    """Exhaustive squared-error split search (variance-reduction gain).

    Gain is sum_L^2/n_L + sum_R^2/n_R - sum^2/n, an SSE decrease up to the
    constant sum of squares. Tie rules as in `best_split_gini`.
    """
    n, m = values.shape
    S = np.cumsum(target)[-1]
    base = S * S / n

    best_f = -1
    best_thr = np.nan
    best_gain = -np.inf
    for f in range(m):
        col = values[:, f]
        order = np.argsort(col)
        vs = col[order]
        valid = vs[1:] > vs[:-1]
        if not valid.any():
            continue
        sl = np.cumsum(target[order])[:-1]
        nl = np.arange(1, n, dtype=np.float64)
        nr = n - nl
        sr = S - sl
        gains = sl * sl / nl + sr * sr / nr - base
        gains = np.where(valid, gains, -np.inf)
        b = int(np.argmax(gains))
        if gains[b] > best_gain:
            best_gain = gains[b]
            best_f = f
            best_thr = 0.5 * (vs[b] + vs[b + 1])
    return best_f, best_thr, best_gain


def tree_apply(feat, thr, left, right, X):
    """Route rows to leaves of an array-encoded tree (left: value <= thr)."""
    n = X.shape[0]
    cur = np.zeros(n, dtype=np.int64)
    while True:
        f = feat[cur]
        live = f >= 0
        if not live.any():
            break
        idx = np.nonzero(live)[0]
        node = cur[idx]
        goleft = X[idx, f[live]] <= thr[node]
        cur[idx] = np.where(goleft, left[node], right[node])
    return cur


def iforest_path_sum(feat, thr, left, right, adjust, offsets, X):
    """Total isolation path length per row, summed over all trees.

    Trees are concatenated into flat node arrays; ``offsets[t]`` is the
    root of tree t. Branching uses value < thr; leaf depth is augmented
    by the precomputed ``adjust`` term.
    """
    n = X.shape[0]
    n_trees = offsets.shape[0] - 1
    out = np.zeros(n)
    for t in range(n_trees):
        cur = np.full(n, offsets[t], dtype=np.int64)
        depth = np.zeros(n)
        while True:
            f = feat[cur]
            live = f >= 0
            if not live.any():
                break
            idx = np.nonzero(live)[0]
            node = cur[idx]
            goleft = X[idx, f[live]] < thr[node]
            cur[idx] = np.where(goleft, left[node], right[node])
            depth[idx] += 1.0
        out += depth + adjust[cur]
    return out


def knn_indices(X, k):
    """Indices of the k nearest neighbors (squared Euclidean) per row.

    Self is excluded; distance ties resolve toward the lower row index.
    """
    n, d = X.shape
    out = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        s = np.zeros(n)
        for c in range(d):
            diff = X[:, c] - X[i, c]
            s += diff * diff
        s[i] = np.inf
        out[i] = np.argsort(s, kind="stable")[:k]
    return out
