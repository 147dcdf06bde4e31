"""Class rebalancing: SMOTE oversampling plus random undersampling.

Synthetic points interpolate a minority row toward one of its k nearest
same-class neighbors: x_new = x_i + lambda * (x_j - x_i) with lambda
uniform on [0, 1]. Encoded categorical coordinates interpolate like any
other coordinate and may come out fractional.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dataset import Dataset
from .rng import child_rng


@dataclass
class ResamplePlan:
    """Per-class target counts plus the SMOTE neighbor count and seed."""

    targets: dict
    smote_k: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.smote_k < 1:
            raise ValueError(f"smote_k must be >= 1, got {self.smote_k}")
        for cls, count in self.targets.items():
            if count < 1:
                raise ValueError(f"target for class {cls} must be >= 1, got {count}")

    @classmethod
    def median_plan(cls, ds: Dataset, smote_k: int = 5, seed: int = 0) -> "ResamplePlan":
        """Every present class is pulled to the median class count."""
        present = np.unique(ds.labels)
        counts = np.asarray([(ds.labels == c).sum() for c in present])
        target = int(math.floor(float(np.median(counts)) + 0.5))
        return cls(targets={int(c): target for c in present}, smote_k=smote_k, seed=seed)


@dataclass
class SyntheticSample:
    features: np.ndarray
    parent_i: int
    parent_j: int
    lam: float


def smote_oversample(ds: Dataset, cls: int, n_new: int, k: int = 5, seed: int = 0):
    """Generate n_new synthetic samples for the given class.

    parent_j is one of the k nearest Euclidean neighbors of parent_i
    within the class (ties toward the lower row index).
    """
    rows = np.nonzero(ds.labels == cls)[0]
    if rows.size < 2:
        raise ValueError(f"class {cls} has {rows.size} instance(s); SMOTE needs >= 2")
    if k > rows.size - 1:
        raise ValueError(f"k={k} too large for class {cls} with {rows.size} instances")
    Xc = np.ascontiguousarray(ds.features[rows])
    neighbors = kernels.knn_indices(Xc, k)
    rng = child_rng(seed, "smote", int(cls))
    out = []
    for _ in range(n_new):
        i_local = int(rng.integers(0, rows.size))
        j_local = int(neighbors[i_local, int(rng.integers(0, k))])
        lam = float(rng.random())
        xi = ds.features[rows[i_local]]
        xj = ds.features[rows[j_local]]
        out.append(
            SyntheticSample(
                features=xi + lam * (xj - xi),
                parent_i=int(rows[i_local]),
                parent_j=int(rows[j_local]),
                lam=lam,
            )
        )
    return out


def random_undersample(ds: Dataset, cls: int, n_keep: int, seed: int = 0) -> Dataset:
    """Keep a uniform without-replacement sample of n_keep rows of the
    class; other classes and survivor order are untouched."""
    rows = np.nonzero(ds.labels == cls)[0]
    if n_keep < 1:
        raise ValueError(f"n_keep must be >= 1, got {n_keep}")
    if n_keep > rows.size:
        raise ValueError(f"n_keep={n_keep} exceeds class {cls} count {rows.size}")
    if n_keep == rows.size:
        return ds
    rng = child_rng(seed, "undersample", int(cls))
    kept = rng.choice(rows, size=n_keep, replace=False)
    keep = np.ones(ds.n, dtype=bool)
    keep[rows] = False
    keep[kept] = True
    return ds.take_rows(np.nonzero(keep)[0])


def balance(ds: Dataset, plan: ResamplePlan) -> Dataset:
    """Bring every class exactly to its planned count.

    Classes above target are randomly undersampled, classes below target
    gain SMOTE samples interpolated between original rows, and the result
    is shuffled deterministically by the plan seed.
    """
    present = [int(c) for c in np.unique(ds.labels)]
    for c in present:
        if c not in plan.targets:
            raise ValueError(f"plan has no target for class {c}")

    keep = np.ones(ds.n, dtype=bool)
    synth_feats = []
    synth_labels = []
    for c in present:
        rows = np.nonzero(ds.labels == c)[0]
        target = plan.targets[c]
        if rows.size > target:
            rng = child_rng(plan.seed, "undersample", c)
            kept = rng.choice(rows, size=target, replace=False)
            keep[rows] = False
            keep[kept] = True
        elif rows.size < target:
            samples = smote_oversample(ds, c, target - rows.size, plan.smote_k, plan.seed)
            synth_feats.extend(s.features for s in samples)
            synth_labels.extend([c] * len(samples))

    X = ds.features[keep]
    y = ds.labels[keep]
    if synth_feats:
        X = np.vstack([X, np.asarray(synth_feats)])
        y = np.concatenate([y, np.asarray(synth_labels, dtype=np.int64)])
    perm = child_rng(plan.seed, "balance_shuffle").permutation(y.size)
    return Dataset(X[perm], y[perm], ds.schema, ds.encoding)
