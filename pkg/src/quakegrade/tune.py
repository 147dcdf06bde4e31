"""Cross-validated grid and random hyperparameter search.

A candidate is a plain dict of axis values. Its training seed derives
from the candidate's canonical JSON digest, so fold losses do not depend
on enumeration order. Failed candidates rank strictly worse than any
finite loss instead of aborting the sweep.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .errors import StratificationError
from .metrics import class_metrics, confusion_matrix
from .numerics import cross_entropy
from .rng import child_rng

LOSS_NAMES = ("cross_entropy", "one_minus_accuracy", "one_minus_macro_f1")


@dataclass
class ParamGrid:
    """Named axes of candidate values; the grid is their Cartesian product."""

    axes: dict

    def __post_init__(self):
        for name, values in self.axes.items():
            if not values:
                raise ValueError(f"axis {name!r} is empty")

    def candidates(self) -> list:
        names = list(self.axes)
        return [dict(zip(names, combo)) for combo in itertools.product(*self.axes.values())]


@dataclass
class CvSpec:
    k: int = 5
    stratified: bool = True
    seed: int = 0
    loss: str = "one_minus_macro_f1"

    def __post_init__(self):
        if self.k < 2:
            raise ValueError(f"k must be >= 2, got {self.k}")
        if self.loss not in LOSS_NAMES:
            raise ValueError(f"loss must be one of {LOSS_NAMES}, got {self.loss!r}")


def plain_fold_ids(n: int, k: int, rng) -> np.ndarray:
    if n < k:
        raise StratificationError(f"cannot make {k} folds from {n} rows")
    fold = np.empty(n, dtype=np.int64)
    fold[rng.permutation(n)] = np.arange(n) % k
    return fold


def stratified_fold_ids(labels: np.ndarray, k: int, rng) -> np.ndarray:
    """Fold id per row: per-class counts differ by <= 1 across folds and
    total fold sizes differ by <= 1 (extras go to the emptiest folds)."""
    n = labels.size
    if n < k:
        raise StratificationError(f"cannot make {k} folds from {n} rows")
    fold = np.empty(n, dtype=np.int64)
    totals = np.zeros(k, dtype=np.int64)
    for c in np.unique(labels):
        idx = np.nonzero(labels == c)[0]
        if idx.size < k:
            raise StratificationError(f"class {int(c)} has {idx.size} rows, fewer than k={k}")
        perm = rng.permutation(idx)
        sizes = np.full(k, idx.size // k, dtype=np.int64)
        rem = idx.size - int(sizes.sum())
        if rem:
            order = np.lexsort((np.arange(k), totals))
            sizes[order[:rem]] += 1
        start = 0
        for f in range(k):
            fold[perm[start : start + sizes[f]]] = f
            start += sizes[f]
        totals += sizes
    return fold


def k_fold_split(ds: Dataset, spec: CvSpec):
    """k (train, validation) dataset pairs; validation folds are disjoint
    and cover the dataset."""
    rng = child_rng(spec.seed, "kfold")
    if spec.stratified:
        fold = stratified_fold_ids(ds.labels, spec.k, rng)
    else:
        fold = plain_fold_ids(ds.n, spec.k, rng)
    pairs = []
    for f in range(spec.k):
        val_rows = np.nonzero(fold == f)[0]
        train_rows = np.nonzero(fold != f)[0]
        pairs.append((ds.take_rows(train_rows), ds.take_rows(val_rows)))
    return pairs


def evaluate_loss(name: str, y_true, proba) -> float:
    if name == "cross_entropy":
        return cross_entropy(proba, y_true)
    pred = np.argmax(proba, axis=1)
    report = class_metrics(confusion_matrix(y_true, pred, n_classes=proba.shape[1]))
    if name == "one_minus_accuracy":
        return 1.0 - report.accuracy
    if name == "one_minus_macro_f1":
        return 1.0 - report.macro["f1"]
    raise ValueError(f"unknown loss {name!r}")


@dataclass
class TuneResult:
    """Every candidate's fold losses plus the argmin configuration."""

    candidates: list
    fold_losses: list
    mean_losses: list
    best_index: int
    best_params: dict
    exploration_order: list
    errors: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "candidates": self.candidates,
            "fold_losses": self.fold_losses,
            "mean_losses": [None if math.isinf(v) else v for v in self.mean_losses],
            "best_index": self.best_index,
            "best_params": self.best_params,
            "exploration_order": self.exploration_order,
            "errors": self.errors,
        }


def candidate_seed(master_seed: int, params: dict) -> int:
    """Seed derived from the candidate's identity, not its position."""
    digest = hashlib.sha256(json.dumps(params, sort_keys=True).encode()).digest()
    return int(
        child_rng(master_seed, "tune_candidate", int.from_bytes(digest[:8], "little")).integers(
            0, 2**63
        )
    )


def _evaluate_candidates(ds, candidates, factory, spec, fold_prep, exploration_order):
    folds = k_fold_split(ds, spec)
    if fold_prep is not None:
        folds = [(fold_prep(train, spec.seed), val) for train, val in folds]

    fold_losses = []
    mean_losses = []
    errors = []
    for params in candidates:
        fit_fn = factory(params)
        seed = candidate_seed(spec.seed, params)
        losses = []
        error = None
        for train, val in folds:
            try:
                model = fit_fn(train, seed)
                losses.append(evaluate_loss(spec.loss, val.labels, model.predict_proba(val.features)))
            except Exception as exc:  # failed candidates rank worst, sweep continues
                error = f"{type(exc).__name__}: {exc}"
                losses = [math.inf] * spec.k
                break
        fold_losses.append(losses)
        s = 0.0
        for v in losses:
            s += v
        mean_losses.append(s / spec.k)
        errors.append(error)

    best = 0
    for i in range(1, len(candidates)):
        if mean_losses[i] < mean_losses[best]:
            best = i
    return TuneResult(
        candidates=candidates,
        fold_losses=fold_losses,
        mean_losses=mean_losses,
        best_index=best,
        best_params=candidates[best],
        exploration_order=exploration_order,
        errors=errors,
    )


def grid_search(ds: Dataset, grid: ParamGrid, factory, spec: CvSpec, fold_prep=None) -> TuneResult:
    """Evaluate every grid candidate on identical folds.

    ``factory(params)`` must return a fit function ``(train_ds, seed) ->
    model``. ``fold_prep(train_ds, seed)``, when given, transforms each
    fold's training portion once before the sweep (e.g. rebalancing);
    validation portions are never touched.
    """
    candidates = grid.candidates()
    if not candidates:
        raise ValueError("empty candidate set")
    order = list(range(len(candidates)))
    return _evaluate_candidates(ds, candidates, factory, spec, fold_prep, order)


def random_search(
    ds: Dataset, grid: ParamGrid, n_samples: int, factory, spec: CvSpec, fold_prep=None
) -> TuneResult:
    """Draw n_samples candidates uniformly per axis (deduplicated,
    first-draw order kept) and evaluate them like grid_search."""
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    rng = child_rng(spec.seed, "random_search")
    names = list(grid.axes)
    seen = set()
    candidates = []
    draws = []
    for _ in range(n_samples):
        combo = tuple(int(rng.integers(0, len(grid.axes[name]))) for name in names)
        draws.append(combo)
        if combo in seen:
            continue
        seen.add(combo)
        candidates.append({name: grid.axes[name][i] for name, i in zip(names, combo)})
    order = list(range(len(candidates)))
    return _evaluate_candidates(ds, candidates, factory, spec, fold_prep, order)
