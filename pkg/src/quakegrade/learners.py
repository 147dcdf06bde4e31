"""Classical multi-class classifiers under one predict-probability contract.

Every model returns a probability vector per row (entries >= 0, summing
to 1 within 1e-9) and predicts the argmax class, ties toward the lowest
index. Fits are deterministic given their config seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dataset import Dataset
from .errors import DivergenceError
from .numerics import cross_entropy, one_hot, softmax
from .rng import child_rng

N_CLASSES = 3

LEAF_VALUE_LIMIT = 10.0  # guards Newton leaf values when hessians saturate


class Classifier:
    """Shared prediction contract for all fitted models."""

    n_classes: int = N_CLASSES
    d_in: int = 0

    def predict_proba(self, X):
        raise NotImplementedError

    def predict(self, X):
        p = self.predict_proba(X)
        if p.ndim == 1:
            return int(np.argmax(p))
        return np.argmax(p, axis=1).astype(np.int64)

    def _as_matrix(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        single = X.ndim == 1
        if single:
            X = X[None, :]
        if X.ndim != 2 or X.shape[1] != self.d_in:
            raise ValueError(f"input has shape {X.shape}, model expects {self.d_in} features")
        return X, single


def predict_proba(model: Classifier, x):
    return model.predict_proba(x)


def predict(model: Classifier, x):
    return model.predict(x)


def _check_labels(ds: Dataset, n_classes: int, min_classes: int = 2):
    present = np.unique(ds.labels)
    if present.size < min_classes:
        raise ValueError(f"need at least {min_classes} classes, labels contain {present.size}")
    if ds.labels.max() >= n_classes:
        raise ValueError(f"labels exceed n_classes={n_classes}")


# ---------------------------------------------------------------------------
# logistic regression


@dataclass
class LogisticConfig:
    learning_rate: float = 0.1
    epochs: int = 200
    batch_size: int = 256
    l2: float = 0.0
    standardize: bool = True
    n_classes: int = N_CLASSES
    seed: int = 0


def logistic_loss_grad(W, b, X, y, l2):
    """Softmax cross-entropy with an l2 * ||W||^2 penalty (weights only),
    plus its analytic gradient. Shared by training and gradient checks."""
    n = X.shape[0]
    P = softmax(X @ W.T + b)
    loss = cross_entropy(P, y) + l2 * float(np.sum(W * W))
    G = (P - one_hot(y, W.shape[0])) / n
    gW = G.T @ X + 2.0 * l2 * W
    gb = G.sum(axis=0)
    return loss, gW, gb


class LogisticRegressionModel(Classifier):
    def __init__(self, weights, biases, l2, learning_rate, epochs, batch_size, train_losses):
        self.weights = weights
        self.biases = biases
        self.l2 = l2
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.train_losses = train_losses
        self.n_classes = weights.shape[0]
        self.d_in = weights.shape[1]

    def predict_proba(self, X):
        Xm, single = self._as_matrix(X)
        P = softmax(Xm @ self.weights.T + self.biases)
        return P[0] if single else P

    def to_payload(self) -> dict:
        from .serialize import encode_array

        return {
            "weights": encode_array(self.weights),
            "biases": encode_array(self.biases),
            "l2": self.l2,
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "train_losses": list(self.train_losses),
        }

    @classmethod
    def from_payload(cls, obj: dict) -> "LogisticRegressionModel":
        from .serialize import decode_array

        return cls(
            weights=decode_array(obj["weights"]),
            biases=decode_array(obj["biases"]),
            l2=obj["l2"],
            learning_rate=obj["learning_rate"],
            epochs=obj["epochs"],
            batch_size=obj["batch_size"],
            train_losses=list(obj["train_losses"]),
        )


def fit_logistic(ds: Dataset, config: LogisticConfig | None = None) -> LogisticRegressionModel:
    """Mini-batch gradient descent on the penalized cross-entropy.

    Optimization runs in standardized feature space for stability; the
    scaling is folded back into the returned weights, so the model is a
    plain softmax over raw inputs.
    """
    cfg = config or LogisticConfig()
    _check_labels(ds, cfg.n_classes)
    X = ds.features
    y = ds.labels
    n, d = X.shape
    C = cfg.n_classes

    if cfg.standardize:
        mu = X.mean(axis=0)
        sigma = X.std(axis=0)
        sigma = np.where(sigma == 0.0, 1.0, sigma)
        Xs = (X - mu) / sigma
    else:
        mu = np.zeros(d)
        sigma = np.ones(d)
        Xs = X

    W = np.zeros((C, d))
    b = np.zeros(C)
    rng = child_rng(cfg.seed, "logistic_shuffle")
    loss0, _, _ = logistic_loss_grad(W, b, Xs, y, cfg.l2)
    losses = [loss0]
    for epoch in range(cfg.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            _, gW, gb = logistic_loss_grad(W, b, Xs[idx], y[idx], cfg.l2)
            W -= cfg.learning_rate * gW
            b -= cfg.learning_rate * gb
        loss, _, _ = logistic_loss_grad(W, b, Xs, y, cfg.l2)
        if not math.isfinite(loss):
            raise DivergenceError(f"logistic training diverged at epoch {epoch}")
        losses.append(loss)

    W_raw = W / sigma
    b_raw = b - W_raw @ mu
    return LogisticRegressionModel(
        weights=W_raw,
        biases=b_raw,
        l2=cfg.l2,
        learning_rate=cfg.learning_rate,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        train_losses=losses,
    )


# ---------------------------------------------------------------------------
# decision tree


@dataclass
class TreeConfig:
    max_depth: int = 12
    min_samples_split: int = 2
    n_classes: int = N_CLASSES
    seed: int = 0  # single trees are deterministic; kept for uniformity


class DecisionTreeModel(Classifier):
    """Array-encoded CART tree; leaves hold (weighted) class counts."""

    def __init__(self, feat, thr, left, right, leaf_counts, n_classes, d_in):
        self.feat = feat
        self.thr = thr
        self.left = left
        self.right = right
        self.leaf_counts = leaf_counts
        self.n_classes = n_classes
        self.d_in = d_in

    @property
    def n_nodes(self) -> int:
        return self.feat.size

    def apply(self, X) -> np.ndarray:
        Xm, _ = self._as_matrix(X)
        return kernels.tree_apply(self.feat, self.thr, self.left, self.right, Xm)

    def predict_proba(self, X):
        Xm, single = self._as_matrix(X)
        leaves = kernels.tree_apply(self.feat, self.thr, self.left, self.right, Xm)
        counts = self.leaf_counts[leaves]
        P = counts / counts.sum(axis=1, keepdims=True)
        return P[0] if single else P

    def to_payload(self) -> dict:
        from .serialize import encode_array

        return {
            "feat": encode_array(self.feat),
            "thr": encode_array(self.thr),
            "left": encode_array(self.left),
            "right": encode_array(self.right),
            "leaf_counts": encode_array(self.leaf_counts),
            "n_classes": self.n_classes,
            "d_in": self.d_in,
        }

    @classmethod
    def from_payload(cls, obj: dict) -> "DecisionTreeModel":
        from .serialize import decode_array

        return cls(
            feat=decode_array(obj["feat"]),
            thr=decode_array(obj["thr"]),
            left=decode_array(obj["left"]),
            right=decode_array(obj["right"]),
            leaf_counts=decode_array(obj["leaf_counts"]),
            n_classes=obj["n_classes"],
            d_in=obj["d_in"],
        )


class _ClassTreeGrower:
    def __init__(self, X, y, w, n_classes, max_depth, min_samples_split, max_features=None, rng=None):
        self.X = X
        self.y = y
        self.w = w
        self.C = n_classes
        self.max_depth = max_depth
        self.min_split = min_samples_split
        self.max_features = max_features
        self.rng = rng
        self.feat: list[int] = []
        self.thr: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.counts: list[np.ndarray] = []

    def build(self) -> DecisionTreeModel:
        self._grow(np.arange(self.X.shape[0], dtype=np.int64), 0)
        return DecisionTreeModel(
            feat=np.asarray(self.feat, dtype=np.int64),
            thr=np.asarray(self.thr, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            leaf_counts=np.asarray(self.counts, dtype=np.float64),
            n_classes=self.C,
            d_in=self.X.shape[1],
        )

    def _grow(self, rows, depth) -> int:
        node = len(self.feat)
        self.feat.append(-1)
        self.thr.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.counts.append(np.bincount(self.y[rows], weights=self.w[rows], minlength=self.C))

        if depth >= self.max_depth or rows.size < self.min_split:
            return node
        if np.unique(self.y[rows]).size == 1:
            return node

        d = self.X.shape[1]
        if self.max_features is not None and self.max_features < d:
            fs = np.sort(self.rng.choice(d, size=self.max_features, replace=False))
        else:
            fs = np.arange(d, dtype=np.int64)
        f_local, thr, gain = kernels.best_split_gini(
            np.ascontiguousarray(self.X[rows][:, fs]),
            np.ascontiguousarray(self.y[rows]),
            np.ascontiguousarray(self.w[rows]),
            self.C,
        )
        if f_local < 0 or gain <= 0.0:
            return node
        f = int(fs[f_local])
        go_left = self.X[rows, f] <= thr
        self.feat[node] = f
        self.thr[node] = float(thr)
        self.left[node] = self._grow(rows[go_left], depth + 1)
        self.right[node] = self._grow(rows[~go_left], depth + 1)
        return node


def fit_tree(ds: Dataset, config: TreeConfig | None = None, sample_weight=None) -> DecisionTreeModel:
    """Grow a CART tree: exhaustive Gini split search over midpoints of
    consecutive distinct values, ties toward (lower feature, lower
    threshold); recursion stops at pure nodes, max_depth, or
    min_samples_split."""
    cfg = config or TreeConfig()
    _check_labels(ds, cfg.n_classes, min_classes=1)
    if ds.n < 1:
        raise ValueError("cannot fit a tree on an empty dataset")
    w = np.ones(ds.n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    grower = _ClassTreeGrower(
        ds.features, ds.labels, w, cfg.n_classes, cfg.max_depth, cfg.min_samples_split
    )
    return grower.build()


# ---------------------------------------------------------------------------
# random forest


@dataclass
class ForestConfig:
    n_trees: int = 100
    max_depth: int = 12
    min_samples_split: int = 2
    max_features: int | None = None  # None -> ceil(sqrt(d))
    bootstrap: bool = True
    n_classes: int = N_CLASSES
    seed: int = 0


class RandomForestModel(Classifier):
    def __init__(self, trees, n_classes, d_in):
        self.trees = trees
        self.n_classes = n_classes
        self.d_in = d_in

    def predict_proba(self, X):
        Xm, single = self._as_matrix(X)
        acc = np.zeros((Xm.shape[0], self.n_classes))
        for tree in self.trees:
            acc += tree.predict_proba(Xm)
        P = acc / len(self.trees)
        return P[0] if single else P

    def to_payload(self) -> dict:
        return {
            "trees": [t.to_payload() for t in self.trees],
            "n_classes": self.n_classes,
            "d_in": self.d_in,
        }

    @classmethod
    def from_payload(cls, obj: dict) -> "RandomForestModel":
        trees = [DecisionTreeModel.from_payload(t) for t in obj["trees"]]
        return cls(trees=trees, n_classes=obj["n_classes"], d_in=obj["d_in"])


def fit_forest(ds: Dataset, config: ForestConfig | None = None) -> RandomForestModel:
    """Bootstrap-aggregated CART trees with a random feature subset of
    size ceil(sqrt(d)) per split; per-tree streams derive from the seed."""
    cfg = config or ForestConfig()
    _check_labels(ds, cfg.n_classes, min_classes=1)
    if ds.n < 2:
        raise ValueError("forest fitting needs at least 2 rows")
    d = ds.d
    max_features = cfg.max_features if cfg.max_features is not None else math.ceil(math.sqrt(d))
    if not 1 <= max_features <= d:
        raise ValueError(f"max_features must be in 1..{d}, got {max_features}")

    trees = []
    for t in range(cfg.n_trees):
        rng = child_rng(cfg.seed, "forest", t)
        rows = rng.integers(0, ds.n, ds.n) if cfg.bootstrap else np.arange(ds.n, dtype=np.int64)
        grower = _ClassTreeGrower(
            ds.features[rows],
            ds.labels[rows],
            np.ones(rows.size),
            cfg.n_classes,
            cfg.max_depth,
            cfg.min_samples_split,
            max_features=max_features,
            rng=rng,
        )
        trees.append(grower.build())
    return RandomForestModel(trees=trees, n_classes=cfg.n_classes, d_in=d)


# ---------------------------------------------------------------------------
# gradient boosting


@dataclass
class GbmConfig:
    n_rounds: int = 100
    learning_rate: float = 0.1
    max_depth: int = 3
    min_samples_split: int = 2
    n_classes: int = N_CLASSES
    seed: int = 0  # boosting is deterministic; kept for uniformity


class RegressionTree:
    """Squared-error tree over boosting residuals; leaves hold one Newton
    step sum(residual) / sum(hessian), clipped to +-LEAF_VALUE_LIMIT."""

    def __init__(self, feat, thr, left, right, value):
        self.feat = feat
        self.thr = thr
        self.left = left
        self.right = right
        self.value = value

    def predict(self, X) -> np.ndarray:
        leaves = kernels.tree_apply(self.feat, self.thr, self.left, self.right, X)
        return self.value[leaves]

    def to_payload(self) -> dict:
        from .serialize import encode_array

        return {
            "feat": encode_array(self.feat),
            "thr": encode_array(self.thr),
            "left": encode_array(self.left),
            "right": encode_array(self.right),
            "value": encode_array(self.value),
        }

    @classmethod
    def from_payload(cls, obj: dict) -> "RegressionTree":
        from .serialize import decode_array

        return cls(
            feat=decode_array(obj["feat"]),
            thr=decode_array(obj["thr"]),
            left=decode_array(obj["left"]),
            right=decode_array(obj["right"]),
            value=decode_array(obj["value"]),
        )


class _RegTreeGrower:
    def __init__(self, X, residual, hessian, max_depth, min_samples_split):
        self.X = X
        self.r = residual
        self.h = hessian
        self.max_depth = max_depth
        self.min_split = min_samples_split
        self.feat: list[int] = []
        self.thr: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []

    def build(self) -> RegressionTree:
        self._grow(np.arange(self.X.shape[0], dtype=np.int64), 0)
        return RegressionTree(
            feat=np.asarray(self.feat, dtype=np.int64),
            thr=np.asarray(self.thr, dtype=np.float64),
            left=np.asarray(self.left, dtype=np.int64),
            right=np.asarray(self.right, dtype=np.int64),
            value=np.asarray(self.value, dtype=np.float64),
        )

    def _leaf_value(self, rows) -> float:
        num = float(self.r[rows].sum())
        den = max(float(self.h[rows].sum()), 1e-16)
        return float(np.clip(num / den, -LEAF_VALUE_LIMIT, LEAF_VALUE_LIMIT))

    def _grow(self, rows, depth) -> int:
        node = len(self.feat)
        self.feat.append(-1)
        self.thr.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(self._leaf_value(rows))

        if depth >= self.max_depth or rows.size < self.min_split:
            return node
        f, thr, gain = kernels.best_split_sse(
            np.ascontiguousarray(self.X[rows]), np.ascontiguousarray(self.r[rows])
        )
        if f < 0 or gain <= 0.0:
            return node
        go_left = self.X[rows, f] <= thr
        self.feat[node] = int(f)
        self.thr[node] = float(thr)
        self.left[node] = self._grow(rows[go_left], depth + 1)
        self.right[node] = self._grow(rows[~go_left], depth + 1)
        return node


class GradientBoostingModel(Classifier):
    def __init__(self, init_scores, trees, learning_rate, n_classes, d_in, train_losses, warnings):
        self.init_scores = init_scores
        self.trees = trees  # list of rounds, each a list of C RegressionTrees
        self.learning_rate = learning_rate
        self.n_classes = n_classes
        self.d_in = d_in
        self.train_losses = train_losses
        self.warnings = warnings

    def decision_scores(self, X) -> np.ndarray:
        Xm, _ = self._as_matrix(X)
        F = np.tile(self.init_scores, (Xm.shape[0], 1))
        for round_trees in self.trees:
            for c, tree in enumerate(round_trees):
                F[:, c] += self.learning_rate * tree.predict(Xm)
        return F

    def predict_proba(self, X):
        Xm, single = self._as_matrix(X)
        P = softmax(self.decision_scores(Xm))
        return P[0] if single else P

    def to_payload(self) -> dict:
        from .serialize import encode_array

        return {
            "init_scores": encode_array(self.init_scores),
            "trees": [[t.to_payload() for t in round_trees] for round_trees in self.trees],
            "learning_rate": self.learning_rate,
            "n_classes": self.n_classes,
            "d_in": self.d_in,
            "train_losses": list(self.train_losses),
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_payload(cls, obj: dict) -> "GradientBoostingModel":
        from .serialize import decode_array

        trees = [[RegressionTree.from_payload(t) for t in rt] for rt in obj["trees"]]
        return cls(
            init_scores=decode_array(obj["init_scores"]),
            trees=trees,
            learning_rate=obj["learning_rate"],
            n_classes=obj["n_classes"],
            d_in=obj["d_in"],
            train_losses=list(obj["train_losses"]),
            warnings=list(obj["warnings"]),
        )


def fit_gbm(ds: Dataset, config: GbmConfig | None = None) -> GradientBoostingModel:
    """Stagewise softmax boosting: each round fits one squared-error tree
    per class to the residuals 1(y=c) - P(c|x), starting from the class
    prior log-odds. A >10% loss increase over 5 rounds logs a warning."""
    cfg = config or GbmConfig()
    _check_labels(ds, cfg.n_classes)
    if ds.n < 2:
        raise ValueError("boosting needs at least 2 rows")
    X = ds.features
    y = ds.labels
    n = ds.n
    C = cfg.n_classes

    priors = np.bincount(y, minlength=C) / n
    init = np.log(np.clip(priors, 1e-12, None))
    F = np.tile(init, (n, 1))
    Y = one_hot(y, C)

    losses = [cross_entropy(softmax(F), y)]
    warnings: list[str] = []
    rounds = []
    for t in range(cfg.n_rounds):
        P = softmax(F)
        R = Y - P
        H = P * (1.0 - P)
        round_trees = []
        for c in range(C):
            tree = _RegTreeGrower(X, R[:, c], H[:, c], cfg.max_depth, cfg.min_samples_split).build()
            F[:, c] += cfg.learning_rate * tree.predict(X)
            round_trees.append(tree)
        rounds.append(round_trees)
        losses.append(cross_entropy(softmax(F), y))
        if len(losses) >= 6 and losses[-1] > 1.1 * losses[-6]:
            warnings.append(f"round {t}: training loss rose more than 10% over 5 rounds")
    return GradientBoostingModel(
        init_scores=init,
        trees=rounds,
        learning_rate=cfg.learning_rate,
        n_classes=C,
        d_in=ds.d,
        train_losses=losses,
        warnings=warnings,
    )


# ---------------------------------------------------------------------------
# AdaBoost (SAMME)


@dataclass
class AdaBoostConfig:
    n_rounds: int = 50
    weak_depth: int = 1
    n_classes: int = N_CLASSES
    seed: int = 0  # deterministic; kept for uniformity


class AdaBoostModel(Classifier):
    """SAMME ensemble of shallow trees with weights
    alpha = ln((1-err)/err) + ln(C-1)."""

    def __init__(self, learners, alphas, errors, n_classes, d_in):
        self.learners = learners
        self.alphas = alphas
        self.errors = errors
        self.n_classes = n_classes
        self.d_in = d_in

    def predict_proba(self, X):
        Xm, single = self._as_matrix(X)
        votes = np.zeros((Xm.shape[0], self.n_classes))
        for alpha, learner in zip(self.alphas, self.learners):
            pred = learner.predict(Xm)
            votes[np.arange(Xm.shape[0]), pred] += alpha
        P = votes / votes.sum(axis=1, keepdims=True)
        return P[0] if single else P

    def to_payload(self) -> dict:
        return {
            "learners": [t.to_payload() for t in self.learners],
            "alphas": list(self.alphas),
            "errors": list(self.errors),
            "n_classes": self.n_classes,
            "d_in": self.d_in,
        }

    @classmethod
    def from_payload(cls, obj: dict) -> "AdaBoostModel":
        learners = [DecisionTreeModel.from_payload(t) for t in obj["learners"]]
        return cls(
            learners=learners,
            alphas=list(obj["alphas"]),
            errors=list(obj["errors"]),
            n_classes=obj["n_classes"],
            d_in=obj["d_in"],
        )


def fit_adaboost(ds: Dataset, config: AdaBoostConfig | None = None) -> AdaBoostModel:
    """SAMME boosting of depth-limited trees on reweighted data.

    Stops early on a perfect learner (err = 0) or when the weighted error
    reaches the random-guess floor 1 - 1/C. A first learner at the floor
    is kept alone with unit weight so the model stays usable.
    """
    cfg = config or AdaBoostConfig()
    _check_labels(ds, cfg.n_classes, min_classes=1)
    if ds.n < 2:
        raise ValueError("boosting needs at least 2 rows")
    X = ds.features
    y = ds.labels
    n = ds.n
    C = cfg.n_classes
    tree_cfg = TreeConfig(max_depth=cfg.weak_depth, n_classes=C)

    w = np.full(n, 1.0 / n)
    learners: list[DecisionTreeModel] = []
    alphas: list[float] = []
    errors: list[float] = []
    for _ in range(cfg.n_rounds):
        tree = fit_tree(ds, tree_cfg, sample_weight=w)
        miss = tree.predict(X) != y
        err = float(w[miss].sum())
        if err == 0.0:
            if not learners:
                learners, alphas, errors = [tree], [1.0], [0.0]
            break
        if err >= 1.0 - 1.0 / C:
            if not learners:
                learners, alphas, errors = [tree], [1.0], [err]
            break
        alpha = math.log((1.0 - err) / err) + math.log(C - 1)
        learners.append(tree)
        alphas.append(alpha)
        errors.append(err)
        w = w * np.exp(alpha * miss)
        w = w / w.sum()
    return AdaBoostModel(learners=learners, alphas=alphas, errors=errors, n_classes=C, d_in=ds.d)
