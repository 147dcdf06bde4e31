"""Anomaly filtering with an isolation forest and ANOVA feature selection."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dataset import Dataset
from .rng import child_rng

EULER_GAMMA = 0.5772156649015329


def average_path_length(m: int) -> float:
    """Expected unsuccessful-search path length of a BST with m points."""
    if m <= 1:
        return 0.0
    if m == 2:
        return 1.0
    return 2.0 * (math.log(m - 1) + EULER_GAMMA) - 2.0 * (m - 1) / m


@dataclass
class IsolationForestModel:
    """Flat-array encoding of all isolation trees.

    ``offsets[t]`` indexes the root of tree t inside the concatenated node
    arrays; leaves carry feat -1 and a path-length adjustment c(leaf size).
    """

    feat: np.ndarray
    thr: np.ndarray
    left: np.ndarray
    right: np.ndarray
    adjust: np.ndarray
    offsets: np.ndarray
    subsample_size: int
    n_trees: int
    d_in: int

    def max_node_depth(self) -> int:
        depth = np.zeros(self.feat.size, dtype=np.int64)
        deepest = 0
        for node in range(self.feat.size):
            if self.feat[node] >= 0:
                depth[self.left[node]] = depth[node] + 1
                depth[self.right[node]] = depth[node] + 1
            deepest = max(deepest, int(depth[node]))
        return deepest

    def to_payload(self) -> dict:
        from .serialize import encode_array

        return {
            "feat": encode_array(self.feat),
            "thr": encode_array(self.thr),
            "left": encode_array(self.left),
            "right": encode_array(self.right),
            "adjust": encode_array(self.adjust),
            "offsets": encode_array(self.offsets),
            "subsample_size": self.subsample_size,
            "n_trees": self.n_trees,
            "d_in": self.d_in,
        }

    @classmethod
    def from_payload(cls, obj: dict) -> "IsolationForestModel":
        from .serialize import decode_array

        return cls(
            feat=decode_array(obj["feat"]),
            thr=decode_array(obj["thr"]),
            left=decode_array(obj["left"]),
            right=decode_array(obj["right"]),
            adjust=decode_array(obj["adjust"]),
            offsets=decode_array(obj["offsets"]),
            subsample_size=obj["subsample_size"],
            n_trees=obj["n_trees"],
            d_in=obj["d_in"],
        )


def _grow_isolation_tree(X, rows, depth, cap, rng, feat, thr, left, right, adjust):
    node = len(feat)
    feat.append(-1)
    thr.append(0.0)
    left.append(-1)
    right.append(-1)
    adjust.append(0.0)

    m = rows.size
    if m <= 1 or depth >= cap:
        adjust[node] = average_path_length(m)
        return node
    f = int(rng.integers(0, X.shape[1]))
    col = X[rows, f]
    lo = float(col.min())
    hi = float(col.max())
    if lo == hi:
        adjust[node] = average_path_length(m)
        return node
    p = float(rng.uniform(lo, hi))
    if p <= lo:  # measure-zero draw at the boundary; keep both sides nonempty
        p = float(np.nextafter(lo, hi))
    feat[node] = f
    thr[node] = p
    go_left = col < p
    left[node] = _grow_isolation_tree(X, rows[go_left], depth + 1, cap, rng, feat, thr, left, right, adjust)
    right[node] = _grow_isolation_tree(X, rows[~go_left], depth + 1, cap, rng, feat, thr, left, right, adjust)
    return node


def fit_isolation_forest(
    ds: Dataset, n_trees: int = 100, subsample: int | None = None, seed: int = 0
) -> IsolationForestModel:
    """Grow n_trees isolation trees, each on an independent random
    subsample without replacement, split uniformly between column min/max."""
    n = ds.n
    if subsample is None:
        subsample = min(256, n)
    if n_trees < 1:
        raise ValueError(f"n_trees must be >= 1, got {n_trees}")
    if subsample > n:
        raise ValueError(f"subsample {subsample} exceeds dataset size {n}")
    if subsample < 2:
        raise ValueError(f"subsample must be >= 2, got {subsample}")

    cap = math.ceil(math.log2(subsample))
    X = ds.features
    feat: list[int] = []
    thr: list[float] = []
    left: list[int] = []
    right: list[int] = []
    adjust: list[float] = []
    offsets = [0]
    for t in range(n_trees):
        rng = child_rng(seed, "isolation_forest", t)
        rows = np.sort(rng.choice(n, size=subsample, replace=False))
        _grow_isolation_tree(X, rows, 0, cap, rng, feat, thr, left, right, adjust)
        offsets.append(len(feat))
    return IsolationForestModel(
        feat=np.asarray(feat, dtype=np.int64),
        thr=np.asarray(thr, dtype=np.float64),
        left=np.asarray(left, dtype=np.int64),
        right=np.asarray(right, dtype=np.int64),
        adjust=np.asarray(adjust, dtype=np.float64),
        offsets=np.asarray(offsets, dtype=np.int64),
        subsample_size=subsample,
        n_trees=n_trees,
        d_in=ds.d,
    )


def anomaly_scores(model: IsolationForestModel, ds: Dataset) -> np.ndarray:
    """s(x) = 2^(-E[h(x)] / c(psi)); higher means more anomalous."""
    if ds.d != model.d_in:
        raise ValueError(f"dataset has {ds.d} features, model expects {model.d_in}")
    total = kernels.iforest_path_sum(
        model.feat, model.thr, model.left, model.right, model.adjust, model.offsets,
        ds.features,
    )
    mean_path = total / model.n_trees
    return np.power(2.0, -mean_path / average_path_length(model.subsample_size))


def filter_anomalies(ds: Dataset, model: IsolationForestModel, contamination: float) -> Dataset:
    """Drop the floor(contamination * n) highest-scoring rows.

    Score ties keep the earlier row; survivor order is preserved.
    """
    if not 0.0 < contamination < 0.5:
        raise ValueError(f"contamination must be in (0, 0.5), got {contamination}")
    k = int(math.floor(contamination * ds.n))
    if k == 0:
        return ds
    scores = anomaly_scores(model, ds)
    # order by score desc, then index desc, so ties drop the later row first
    drop = np.lexsort((-np.arange(ds.n), -scores))[:k]
    keep = np.ones(ds.n, dtype=bool)
    keep[drop] = False
    if not keep.any():
        raise ValueError("anomaly filtering would remove every row")
    return ds.take_rows(np.nonzero(keep)[0])


def anova_f_scores(ds: Dataset) -> np.ndarray:
    """One-way ANOVA F statistic per feature column.

    F_j = [sum_c n_c (mu_cj - mu_j)^2 / (C-1)] / [sum_c sum_i (x_ij - mu_cj)^2 / (n-C)].
    Zero within-variance with positive between-variance reports +inf;
    both zero reports 0.
    """
    X = ds.features
    y = ds.labels
    classes = np.unique(y)
    n, d = X.shape
    C = classes.size
    if C < 2:
        raise ValueError("ANOVA requires at least 2 classes in the labels")
    if n <= C:
        raise ValueError(f"ANOVA requires n > C (n={n}, C={C})")

    grand = X.mean(axis=0)
    between = np.zeros(d)
    within = np.zeros(d)
    for c in classes:
        sub = X[y == c]
        mu = sub.mean(axis=0)
        between += sub.shape[0] * (mu - grand) ** 2
        within += ((sub - mu) ** 2).sum(axis=0)
    between /= C - 1
    within /= n - C

    scores = np.empty(d)
    for j in range(d):
        if within[j] > 0.0:
            scores[j] = between[j] / within[j]
        elif between[j] > 0.0:
            scores[j] = np.inf
        else:
            scores[j] = 0.0
    return scores


@dataclass
class SelectorState:
    """Fitted top-k selection: scores plus chosen original column indices."""

    f_scores: np.ndarray
    selected: np.ndarray
    k: int

    def transform(self, ds: Dataset) -> Dataset:
        if ds.d != self.f_scores.size:
            raise ValueError(f"dataset has {ds.d} features, selector was fit on {self.f_scores.size}")
        return Dataset(
            ds.features[:, self.selected],
            ds.labels,
            ds.schema.subset(self.selected),
            ds.encoding,
        )

    def to_payload(self) -> dict:
        from .serialize import encode_array

        return {
            "f_scores": encode_array(self.f_scores),
            "selected": encode_array(self.selected),
            "k": self.k,
        }

    @classmethod
    def from_payload(cls, obj: dict) -> "SelectorState":
        from .serialize import decode_array

        return cls(
            f_scores=decode_array(obj["f_scores"]),
            selected=decode_array(obj["selected"]),
            k=obj["k"],
        )


def select_k_best(ds: Dataset, k: int):
    """Keep the k columns with the largest F-scores (ties toward the lower
    index), preserving original column order. Returns (state, reduced)."""
    if not 1 <= k <= ds.d:
        raise ValueError(f"k must be in 1..{ds.d}, got {k}")
    scores = anova_f_scores(ds)
    order = np.lexsort((np.arange(ds.d), -scores))
    selected = np.sort(order[:k])
    state = SelectorState(f_scores=scores, selected=selected, k=k)
    return state, state.transform(ds)
