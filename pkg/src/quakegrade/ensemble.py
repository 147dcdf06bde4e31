"""Voting, bagging, and stacking combinators over base classifiers.

Base models are supplied as fit functions ``fit_fn(dataset, seed) ->
Classifier`` so the combinators stay agnostic of the underlying learner.
"""

from __future__ import annotations

import numpy as np

from .dataset import Dataset
from .errors import StratificationError
from .learners import Classifier, LogisticConfig, fit_logistic
from .rng import child_rng
from .tune import stratified_fold_ids

MAX_DERIVED_SEED = 2**63


class VotingEnsemble(Classifier):
    """Weighted combination of member probabilities or votes.

    Soft mode averages probability vectors weighted by w_m; hard mode
    counts weighted votes over member argmax predictions. Prediction is
    the argmax of the combined score, ties toward the lowest class.
    """

    def __init__(self, members, weights=None, mode: str = "soft"):
        if not members:
            raise ValueError("voting ensemble needs at least one member")
        if mode not in ("soft", "hard"):
            raise ValueError(f"mode must be 'soft' or 'hard', got {mode!r}")
        if weights is None:
            weights = np.ones(len(members))
        weights = np.asarray(weights, dtype=np.float64)
        if weights.size != len(members):
            raise ValueError("one weight per member required")
        if (weights < 0).any() or weights.sum() <= 0:
            raise ValueError("weights must be nonnegative with a positive sum")
        self.members = list(members)
        self.weights = weights
        self.mode = mode
        self.n_classes = members[0].n_classes
        self.d_in = members[0].d_in

    def vote_proba(self, X):
        Xm, single = self._as_matrix(X)
        combined = np.zeros((Xm.shape[0], self.n_classes))
        if self.mode == "soft":
            for w, member in zip(self.weights, self.members):
                combined += w * member.predict_proba(Xm)
        else:
            rows = np.arange(Xm.shape[0])
            for w, member in zip(self.weights, self.members):
                combined[rows, member.predict(Xm)] += w
        P = combined / self.weights.sum()
        return P[0] if single else P

    def predict_proba(self, X):
        return self.vote_proba(X)

    def to_payload(self) -> dict:
        from .serialize import model_to_doc

        return {
            "members": [model_to_doc(m) for m in self.members],
            "weights": list(self.weights),
            "mode": self.mode,
        }

    @classmethod
    def from_payload(cls, obj: dict) -> "VotingEnsemble":
        from .serialize import model_from_doc

        return cls(
            members=[model_from_doc(m) for m in obj["members"]],
            weights=np.asarray(obj["weights"]),
            mode=obj["mode"],
        )


def vote_proba(ens: VotingEnsemble, x):
    return ens.vote_proba(x)


def vote_predict(ens: VotingEnsemble, x):
    return ens.predict(x)


class BaggingEnsemble(Classifier):
    """M models trained on bootstrap resamples; probabilities averaged."""

    def __init__(self, members):
        if not members:
            raise ValueError("bagging ensemble needs at least one member")
        self.members = list(members)
        self.n_classes = members[0].n_classes
        self.d_in = members[0].d_in

    def predict_proba(self, X):
        Xm, single = self._as_matrix(X)
        acc = np.zeros((Xm.shape[0], self.n_classes))
        for member in self.members:
            acc += member.predict_proba(Xm)
        P = acc / len(self.members)
        return P[0] if single else P

    def to_payload(self) -> dict:
        from .serialize import model_to_doc

        return {"members": [model_to_doc(m) for m in self.members]}

    @classmethod
    def from_payload(cls, obj: dict) -> "BaggingEnsemble":
        from .serialize import model_from_doc

        return cls(members=[model_from_doc(m) for m in obj["members"]])


def fit_bagging(ds: Dataset, fit_fn, M: int, seed: int = 0) -> BaggingEnsemble:
    """Train M copies of the base learner, each on a size-n bootstrap
    resample, with per-member derived seeds."""
    if M < 1:
        raise ValueError(f"M must be >= 1, got {M}")
    members = []
    for m in range(M):
        rng = child_rng(seed, "bagging", m)
        rows = rng.integers(0, ds.n, ds.n)
        member_seed = int(rng.integers(0, MAX_DERIVED_SEED))
        members.append(fit_fn(ds.take_rows(rows), member_seed))
    return BaggingEnsemble(members)


class StackingEnsemble(Classifier):
    """Meta-learner over the concatenated base class probabilities.

    The meta-learner is trained only on out-of-fold base predictions; the
    base models used at inference are refit on the full training data.
    ``fold_ids`` records which fold produced each row's meta features.
    """

    def __init__(self, base_models, meta_model, oof_folds, fold_ids=None):
        if not base_models:
            raise ValueError("stacking needs at least one base model")
        self.base_models = list(base_models)
        self.meta_model = meta_model
        self.oof_folds = oof_folds
        self.fold_ids = fold_ids
        self.n_classes = base_models[0].n_classes
        self.d_in = base_models[0].d_in

    def meta_features(self, X) -> np.ndarray:
        Xm, _ = self._as_matrix(X)
        C = self.n_classes
        out = np.empty((Xm.shape[0], C * len(self.base_models)))
        for m, model in enumerate(self.base_models):
            out[:, m * C : (m + 1) * C] = model.predict_proba(Xm)
        return out

    def predict_proba(self, X):
        Xm, single = self._as_matrix(X)
        P = self.meta_model.predict_proba(self.meta_features(Xm))
        return P[0] if single else P

    def to_payload(self) -> dict:
        from .serialize import model_to_doc

        return {
            "base_models": [model_to_doc(m) for m in self.base_models],
            "meta_model": model_to_doc(self.meta_model),
            "oof_folds": self.oof_folds,
        }

    @classmethod
    def from_payload(cls, obj: dict) -> "StackingEnsemble":
        from .serialize import model_from_doc

        return cls(
            base_models=[model_from_doc(m) for m in obj["base_models"]],
            meta_model=model_from_doc(obj["meta_model"]),
            oof_folds=obj["oof_folds"],
        )


def _default_meta_fit(ds: Dataset, seed: int) -> Classifier:
    return fit_logistic(ds, LogisticConfig(epochs=100, seed=seed))


def fit_stacking(
    ds: Dataset,
    base_fits,
    meta_fit=None,
    oof_folds: int = 5,
    seed: int = 0,
) -> StackingEnsemble:
    """Assemble out-of-fold meta features, then fit the meta-learner.

    Every row's meta feature comes from base models whose training fold
    excluded that row; bases are refit on the full data for inference.
    """
    if oof_folds < 2:
        raise ValueError(f"oof_folds must be >= 2, got {oof_folds}")
    meta_fit = meta_fit or _default_meta_fit
    labels = ds.labels
    present = np.unique(labels)
    fold_ids = stratified_fold_ids(labels, oof_folds, child_rng(seed, "stacking_folds"))

    n = ds.n
    M = len(base_fits)
    if M < 1:
        raise ValueError("stacking needs at least one base fit")

    n_classes = None
    meta_X = None
    for f in range(oof_folds):
        val_rows = np.nonzero(fold_ids == f)[0]
        train_rows = np.nonzero(fold_ids != f)[0]
        train_classes = np.unique(labels[train_rows])
        if train_classes.size != present.size:
            raise StratificationError(f"fold {f} training portion is missing a class")
        fold_ds = ds.take_rows(train_rows)
        for m, fit_fn in enumerate(base_fits):
            fit_seed = int(child_rng(seed, "stacking_oof", f, m).integers(0, MAX_DERIVED_SEED))
            model = fit_fn(fold_ds, fit_seed)
            if meta_X is None:
                n_classes = model.n_classes
                meta_X = np.zeros((n, n_classes * M))
            proba = model.predict_proba(ds.features[val_rows])
            meta_X[val_rows, m * n_classes : (m + 1) * n_classes] = proba

    base_models = []
    for m, fit_fn in enumerate(base_fits):
        fit_seed = int(child_rng(seed, "stacking_full", m).integers(0, MAX_DERIVED_SEED))
        base_models.append(fit_fn(ds, fit_seed))

    from .dataset import from_arrays

    meta_ds = from_arrays(meta_X, labels, names=[f"meta{i}" for i in range(meta_X.shape[1])])
    meta_seed = int(child_rng(seed, "stacking_meta").integers(0, MAX_DERIVED_SEED))
    meta_model = meta_fit(meta_ds, meta_seed)
    return StackingEnsemble(base_models, meta_model, oof_folds, fold_ids=fold_ids)
