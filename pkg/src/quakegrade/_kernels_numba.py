"""Numba-compiled kernel implementations.

Default backend for the hot inner loops: split search for tree growing,
tree traversal, isolation-forest path accumulation, and neighbor search.
Loop bodies mirror `_kernels_numpy` exactly; see that module for the
semantics of each kernel.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def best_split_gini(values, y, w, n_classes):
    n, m = values.shape
    W = 0.0
    tot = np.zeros(n_classes)
    for i in range(n):
        tot[y[i]] += w[i]
        W += w[i]
    s = 0.0
    for c in range(n_classes):
        p = tot[c] / W
        s += p * p
    parent = 1.0 - s

    best_f = -1
    best_thr = np.nan
    best_gain = -np.inf
    left = np.empty(n_classes)
    for f in range(m):
        col = values[:, f].copy()
        order = np.argsort(col)
        for c in range(n_classes):
            left[c] = 0.0
        wl = 0.0
        for pos in range(n - 1):
            i = order[pos]
            left[y[i]] += w[i]
            wl += w[i]
            v0 = col[order[pos]]
            v1 = col[order[pos + 1]]
            if v1 > v0:
                wr = W - wl
                if wl <= 0.0 or wr <= 0.0:
                    continue
                sl = 0.0
                sr = 0.0
                for c in range(n_classes):
                    pl = left[c] / wl
                    sl += pl * pl
                    pr = (tot[c] - left[c]) / wr
                    sr += pr * pr
                gain = parent - (wl / W) * (1.0 - sl) - (wr / W) * (1.0 - sr)
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_thr = 0.5 * (v0 + v1)
    return best_f, best_thr, best_gain


@njit(cache=True)
def best_split_sse(values, target):
    n, m = values.shape
    S = 0.0
    for i in range(n):
        S += target[i]
    base = S * S / n

    best_f = -1
    best_thr = np.nan
    best_gain = -np.inf
    for f in range(m):
        col = values[:, f].copy()
        order = np.argsort(col)
        sl = 0.0
        for pos in range(n - 1):
            sl += target[order[pos]]
            v0 = col[order[pos]]
            v1 = col[order[pos + 1]]
            if v1 > v0:
                nl = float(pos + 1)
                nr = float(n - pos - 1)
                sr = S - sl
                gain = sl * sl / nl + sr * sr / nr - base
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_thr = 0.5 * (v0 + v1)
    return best_f, best_thr, best_gain


@njit(cache=True)
def tree_apply(feat, thr, left, right, X):
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while feat[node] >= 0:
            if X[i, feat[node]] <= thr[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out


@njit(cache=True)
def iforest_path_sum(feat, thr, left, right, adjust, offsets, X):
    n = X.shape[0]
    n_trees = offsets.shape[0] - 1
    out = np.zeros(n)
    for t in range(n_trees):
        root = offsets[t]
        for i in range(n):
            node = root
            depth = 0.0
            while feat[node] >= 0:
                if X[i, feat[node]] < thr[node]:
                    node = left[node]
                else:
                    node = right[node]
                depth += 1.0
            out[i] += depth + adjust[node]
    return out


@njit(cache=True)
def knn_indices(X, k):
    n, d = X.shape
    out = np.empty((n, k), dtype=np.int64)
    d2 = np.empty(n)
    for i in range(n):
        for j in range(n):
            s = 0.0
            for c in range(d):
                diff = X[i, c] - X[j, c]
                s += diff * diff
            d2[j] = s
        d2[i] = np.inf
        for slot in range(k):
            best = -1
            bd = np.inf
            for j in range(n):
                if d2[j] < bd:
                    bd = d2[j]
                    best = j
            out[i, slot] = best
            d2[best] = np.inf
    return out
