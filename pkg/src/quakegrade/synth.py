"""Synthetic benchmark datasets used by tests and reproducible evaluations."""

from __future__ import annotations

import math

import numpy as np

from .dataset import Dataset, from_arrays
from .rng import child_rng


def gaussian_blobs(
    n_per_class=(200, 200, 200), d: int = 20, separation: float = 10.0, noise: float = 1.0, seed: int = 0
) -> Dataset:
    """Well-separated Gaussian clusters, one per class, centered
    ``separation`` apart along distinct axes."""
    n_classes = len(n_per_class)
    if d < n_classes:
        raise ValueError(f"d must be >= {n_classes}")
    rng = child_rng(seed, "blobs")
    rows = []
    labels = []
    for c, count in enumerate(n_per_class):
        center = np.zeros(d)
        center[c] = separation
        rows.append(center + noise * rng.standard_normal((count, d)))
        labels.extend([c] * count)
    X = np.vstack(rows)
    y = np.asarray(labels, dtype=np.int64)
    perm = rng.permutation(y.size)
    return from_arrays(X[perm], y[perm])


def _exact_counts(n: int, weights) -> list:
    """Largest-remainder apportionment of n rows to the given weights."""
    total = float(sum(weights))
    raw = [n * w / total for w in weights]
    counts = [math.floor(r) for r in raw]
    rem = n - sum(counts)
    order = sorted(range(len(weights)), key=lambda i: raw[i] - counts[i], reverse=True)
    for i in order[:rem]:
        counts[i] += 1
    return counts


def ring_benchmark(
    n: int = 2000, d: int = 20, weights=(10, 3, 1), seed: int = 0
) -> Dataset:
    """Imbalanced 3-class benchmark with a nonlinear decision surface.

    Classes are radial shells of the first two coordinates (chi-square
    quantile thresholds make the prior match ``weights``), plus a weak
    linear cue on the third coordinate; remaining coordinates are noise.
    Class counts are exact, filled by rejection sampling.
    """
    if d < 3:
        raise ValueError("d must be >= 3")
    counts = _exact_counts(n, weights)
    total = float(sum(weights))
    # shell thresholds on r^2 ~ chi^2(2): quantile at p is -2 ln(1 - p)
    cum = 0.0
    thresholds = []
    for w in weights[:-1]:
        cum += w / total
        thresholds.append(-2.0 * math.log(1.0 - cum))

    rng = child_rng(seed, "rings")
    need = list(counts)
    rows = []
    labels = []
    while any(need):
        x = rng.standard_normal(d)
        r2 = x[0] * x[0] + x[1] * x[1]
        c = 0
        while c < len(thresholds) and r2 > thresholds[c]:
            c += 1
        if need[c] == 0:
            continue
        x[2] += 0.8 * c  # weak linear cue so linear models stay informative
        need[c] -= 1
        rows.append(x)
        labels.append(c)
    X = np.asarray(rows)
    y = np.asarray(labels, dtype=np.int64)
    perm = rng.permutation(y.size)
    return from_arrays(X[perm], y[perm])
