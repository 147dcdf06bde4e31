"""Hand-backpropagated neural classifiers: a feedforward net and a
Kolmogorov-Arnold-style net with per-input univariate ReLU stacks.

All parameters live in flat name->array dicts so the Adam optimizer and
the gradient checks can treat every model uniformly. Dropout is inverted
(train-time scaling by 1/(1-p)); L2 applies to weight matrices only,
never to biases or batchnorm parameters.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .dataset import Dataset
from .errors import DivergenceError
from .learners import Classifier
from .numerics import cross_entropy, one_hot, softmax
from .rng import child_rng

N_CLASSES = 3


def he_uniform(rng, fan_in: int, shape) -> np.ndarray:
    """Uniform init on [-sqrt(6/fan_in), sqrt(6/fan_in)]."""
    limit = math.sqrt(6.0 / fan_in)
    return rng.uniform(-limit, limit, size=shape)


def step_lr(base_lr: float, epoch: int, step_size: int, gamma: float) -> float:
    """Learning rate after multiplying by gamma every step_size epochs."""
    return base_lr * gamma ** (epoch // step_size)


class EarlyStopper:
    """Track a monitored loss; signal a stop after `patience` epochs
    without strict improvement."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = math.inf
        self.best_epoch = -1
        self.stale = 0

    def update(self, epoch: int, value: float) -> bool:
        """Returns True when training should stop. ``improved`` is set so
        the caller knows whether to snapshot parameters."""
        self.improved = value < self.best
        if self.improved:
            self.best = value
            self.best_epoch = epoch
            self.stale = 0
            return False
        self.stale += 1
        return self.stale >= self.patience


# ---------------------------------------------------------------------------
# Adam


class AdamState:
    """First/second moment accumulators with bias correction."""

    def __init__(self, params: dict, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}


def adam_step(state: AdamState, params: dict, grads: dict, lr: float) -> dict:
    """One Adam update, in place: m/v moment updates, bias correction,
    then theta -= lr * m_hat / (sqrt(v_hat) + eps)."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**state.t
    c2 = 1.0 - b2**state.t
    for key, g in grads.items():
        if not np.isfinite(g).all():
            raise DivergenceError(f"non-finite gradient for parameter {key!r}")
        m = state.m[key]
        v = state.v[key]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        params[key] -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params


# ---------------------------------------------------------------------------
# batch normalization


class BatchNormLayer:
    """Feature-wise normalization with learned scale/shift and running
    statistics (momentum 0.1, eps 1e-5). Train mode normalizes by batch
    moments; eval mode uses the running estimates."""

    EPS = 1e-5
    MOMENTUM = 0.1

    def __init__(self, dim: int):
        self.dim = dim
        self.running_mean = np.zeros(dim)
        self.running_var = np.ones(dim)

    def init_params(self) -> dict:
        return {"gamma": np.ones(self.dim), "beta": np.zeros(self.dim)}

    def forward(self, x, gamma, beta, train: bool):
        if train:
            n = x.shape[0]
            if n < 2:
                raise ValueError("batchnorm train mode needs batch size >= 2")
            mu = x.mean(axis=0)
            var = x.var(axis=0)
            istd = 1.0 / np.sqrt(var + self.EPS)
            xhat = (x - mu) * istd
            self.running_mean = (1.0 - self.MOMENTUM) * self.running_mean + self.MOMENTUM * mu
            self.running_var = (1.0 - self.MOMENTUM) * self.running_var + self.MOMENTUM * (
                var * n / (n - 1)
            )
        else:
            istd = 1.0 / np.sqrt(self.running_var + self.EPS)
            xhat = (x - self.running_mean) * istd
        out = gamma * xhat + beta
        cache = (xhat, istd, gamma, train)
        return out, cache

    @staticmethod
    def backward(dout, cache):
        xhat, istd, gamma, train = cache
        dgamma = (dout * xhat).sum(axis=0)
        dbeta = dout.sum(axis=0)
        dxhat = dout * gamma
        if train:
            n = dout.shape[0]
            dx = (istd / n) * (n * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
        else:
            dx = dxhat * istd
        return dx, dgamma, dbeta


def batchnorm_forward(layer: BatchNormLayer, params: dict, batch, mode: str = "train"):
    """Spec-level entry point; mode is 'train' or 'eval'."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    out, _ = layer.forward(batch, params["gamma"], params["beta"], train=(mode == "train"))
    return out


def _dropout_forward(h, p, rng):
    mask = rng.random(h.shape) >= p
    return h * mask / (1.0 - p), mask


# ---------------------------------------------------------------------------
# feedforward network


@dataclass
class FfnConfig:
    hidden: tuple = (128, 192)
    dropout: float = 0.1033
    l2: float = 4.918e-3
    learning_rate: float = 3.885e-4
    batch_size: int = 256
    epochs: int = 200
    n_classes: int = N_CLASSES
    seed: int = 0


class FfnModel(Classifier):
    """Dense ReLU net with inverted dropout after each hidden layer."""

    def __init__(self, d_in: int, config: FfnConfig, params: dict | None = None):
        self.config = config
        self.d_in = d_in
        self.n_classes = config.n_classes
        self.sizes = [d_in, *config.hidden, config.n_classes]
        if params is None:
            rng = child_rng(config.seed, "ffn_init")
            params = {}
            for i in range(len(self.sizes) - 1):
                fan_in = self.sizes[i]
                params[f"W{i}"] = he_uniform(rng, fan_in, (self.sizes[i + 1], fan_in))
                params[f"b{i}"] = np.zeros(self.sizes[i + 1])
        self.params = params

    @property
    def n_layers(self) -> int:
        return len(self.sizes) - 1

    def forward(self, X, train: bool = False, rng=None):
        """Class probabilities plus the cached activations for backward."""
        Xm, single = self._as_matrix(X)
        p = self.config.dropout
        acts = [Xm]
        pre = []
        masks = []
        a = Xm
        for i in range(self.n_layers - 1):
            z = a @ self.params[f"W{i}"].T + self.params[f"b{i}"]
            h = np.maximum(z, 0.0)
            if train and p > 0.0:
                h, mask = _dropout_forward(h, p, rng)
                masks.append(mask)
            else:
                masks.append(None)
            pre.append(z)
            acts.append(h)
            a = h
        last = self.n_layers - 1
        logits = a @ self.params[f"W{last}"].T + self.params[f"b{last}"]
        probs = softmax(logits)
        cache = {"acts": acts, "pre": pre, "masks": masks, "train": train}
        return (probs[0] if single else probs, cache)

    def backward(self, probs, cache, y) -> dict:
        """Gradients of mean cross-entropy plus the L2 weight penalty."""
        n = probs.shape[0]
        l2 = self.config.l2
        p = self.config.dropout
        grads = {}
        delta = (probs - one_hot(y, self.n_classes)) / n
        last = self.n_layers - 1
        grads[f"W{last}"] = delta.T @ cache["acts"][last] + 2.0 * l2 * self.params[f"W{last}"]
        grads[f"b{last}"] = delta.sum(axis=0)
        da = delta @ self.params[f"W{last}"]
        for i in range(last - 1, -1, -1):
            if cache["train"] and cache["masks"][i] is not None:
                da = da * cache["masks"][i] / (1.0 - p)
            dz = da * (cache["pre"][i] > 0.0)
            grads[f"W{i}"] = dz.T @ cache["acts"][i] + 2.0 * l2 * self.params[f"W{i}"]
            grads[f"b{i}"] = dz.sum(axis=0)
            da = dz @ self.params[f"W{i}"]
        return grads

    def loss(self, probs, y) -> float:
        penalty = 0.0
        for i in range(self.n_layers):
            W = self.params[f"W{i}"]
            penalty += float(np.sum(W * W))
        return cross_entropy(probs, y) + self.config.l2 * penalty

    def predict_proba(self, X):
        probs, _ = self.forward(X, train=False)
        return probs

    def to_payload(self) -> dict:
        from .serialize import encode_array

        return {
            "d_in": self.d_in,
            "config": _config_dict(self.config),
            "params": {k: encode_array(v) for k, v in self.params.items()},
        }

    @classmethod
    def from_payload(cls, obj: dict) -> "FfnModel":
        from .serialize import decode_array

        cfg = FfnConfig(**{**obj["config"], "hidden": tuple(obj["config"]["hidden"])})
        params = {k: decode_array(v) for k, v in obj["params"].items()}
        return cls(d_in=obj["d_in"], config=cfg, params=params)


def _config_dict(cfg) -> dict:
    out = dict(cfg.__dict__)
    for k, v in out.items():
        if isinstance(v, tuple):
            out[k] = list(v)
    return out


def forward(model, batch, mode: str = "eval", seed: int = 0):
    """Spec-level forward: train mode applies inverted dropout from a
    seed-derived stream, eval mode is deterministic."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    rng = child_rng(seed, "dropout") if mode == "train" else None
    return model.forward(batch, train=(mode == "train"), rng=rng)


def backward(model, probs, cache, labels) -> dict:
    return model.backward(probs, cache, labels)


# ---------------------------------------------------------------------------
# training loop shared pieces


@dataclass
class TrainLog:
    """Per-epoch leardeterministic curves plus (non-deterministic) wall time.

    The CSV export carries exactly (epoch, train_loss, train_acc,
    test_acc); wall time stays out of every determinism-sensitive artifact.
    """

    epochs: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    test_acc: list = field(default_factory=list)
    test_loss: list = field(default_factory=list)
    wall_time: float = 0.0

    def append(self, epoch, train_loss, train_acc, test_acc, test_loss):
        self.epochs.append(epoch)
        self.train_loss.append(train_loss)
        self.train_acc.append(train_acc)
        self.test_acc.append(test_acc)
        self.test_loss.append(test_loss)

    def to_csv(self) -> str:
        lines = ["epoch,train_loss,train_acc,test_acc"]
        for e, tl, ta, va in zip(self.epochs, self.train_loss, self.train_acc, self.test_acc):
            lines.append(f"{e},{tl!r},{ta!r},{va!r}")
        return "\n".join(lines) + "\n"


def _accuracy(probs, y) -> float:
    return float(np.mean(np.argmax(probs, axis=1) == y))


def _epoch_metrics(model, train: Dataset, test: Dataset):
    train_probs, _ = model.forward(train.features, train=False)
    test_probs, _ = model.forward(test.features, train=False)
    return (
        model.loss(train_probs, train.labels),
        _accuracy(train_probs, train.labels),
        _accuracy(test_probs, test.labels),
        cross_entropy(test_probs, test.labels),
    )


def train_ffn(train: Dataset, test: Dataset, config: FfnConfig | None = None, seed: int | None = None):
    """Mini-batch Adam training of the feedforward net.

    Batches are reshuffled every epoch (last partial batch kept); the log
    records one entry per epoch and is bit-identical for a fixed seed.
    """
    cfg = config or FfnConfig()
    if seed is None:
        seed = cfg.seed
    model = FfnModel(train.d, cfg)
    adam = AdamState(model.params)
    rng = child_rng(seed, "ffn_train")
    log = TrainLog()
    t0 = time.perf_counter()
    n = train.n
    try:
        for epoch in range(cfg.epochs):
            perm = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = perm[start : start + cfg.batch_size]
                probs, cache = model.forward(train.features[idx], train=True, rng=rng)
                grads = model.backward(probs, cache, train.labels[idx])
                adam_step(adam, model.params, grads, cfg.learning_rate)
            tl, ta, va, vl = _epoch_metrics(model, train, test)
            if not math.isfinite(tl):
                raise DivergenceError(f"ffn training diverged at epoch {epoch}")
            log.append(epoch, tl, ta, va, vl)
    except DivergenceError as exc:
        exc.log = log
        raise
    log.wall_time = time.perf_counter() - t0
    return model, log


# ---------------------------------------------------------------------------
# Kolmogorov-Arnold-style network


@dataclass
class KanConfig:
    univariate_width: int = 8
    hidden: tuple = (128, 64, 32, 16)
    dropout: float = 0.1
    l2: float = 1e-4
    learning_rate: float = 0.01
    batch_size: int = 256
    epochs: int = 200
    step_size: int = 25
    gamma: float = 0.5
    patience: int = 15
    n_classes: int = N_CLASSES
    seed: int = 0


class KanModel(Classifier):
    """Per-input univariate ReLU stacks (1 -> u -> u -> u, no
    cross-coordinate weights), concatenated into a dense head with
    batchnorm and dropout after every hidden layer."""

    def __init__(self, d_in: int, config: KanConfig, params: dict | None = None, bn_layers=None):
        self.config = config
        self.d_in = d_in
        self.n_classes = config.n_classes
        u = config.univariate_width
        self.u = u
        self.head_sizes = [d_in * u, *config.hidden, config.n_classes]
        if params is None:
            rng = child_rng(config.seed, "kan_init")
            params = {
                "U1": he_uniform(rng, 1, (d_in, u)),
                "b1": np.zeros((d_in, u)),
                "U2": he_uniform(rng, u, (d_in, u, u)),
                "b2": np.zeros((d_in, u)),
                "U3": he_uniform(rng, u, (d_in, u, u)),
                "b3": np.zeros((d_in, u)),
            }
            for i in range(len(self.head_sizes) - 1):
                fan_in = self.head_sizes[i]
                params[f"W{i}"] = he_uniform(rng, fan_in, (self.head_sizes[i + 1], fan_in))
                params[f"b_head{i}"] = np.zeros(self.head_sizes[i + 1])
        self.params = params
        n_hidden = len(config.hidden)
        if bn_layers is None:
            bn_layers = [BatchNormLayer(config.hidden[i]) for i in range(n_hidden)]
            for i, bn in enumerate(bn_layers):
                self.params.setdefault(f"gamma{i}", np.ones(bn.dim))
                self.params.setdefault(f"beta{i}", np.zeros(bn.dim))
        self.bn_layers = bn_layers

    def univariate_outputs(self, X) -> np.ndarray:
        """Stage-1 output (n, d, u) before concatenation; coordinate j of
        the input feeds only slice [:, j, :]."""
        Xm, _ = self._as_matrix(X)
        out, _ = self._stage1(Xm)
        return out

    def _stage1(self, X):
        p = self.params
        z1 = X[:, :, None] * p["U1"][None, :, :] + p["b1"]
        h1 = np.maximum(z1, 0.0)
        z2 = np.einsum("ndi,dio->ndo", h1, p["U2"]) + p["b2"]
        h2 = np.maximum(z2, 0.0)
        z3 = np.einsum("ndi,dio->ndo", h2, p["U3"]) + p["b3"]
        h3 = np.maximum(z3, 0.0)
        return h3, (z1, h1, z2, h2, z3)

    def forward(self, X, train: bool = False, rng=None):
        Xm, single = self._as_matrix(X)
        p = self.config.dropout
        h3, stage1_cache = self._stage1(Xm)
        a = h3.reshape(Xm.shape[0], self.d_in * self.u)

        acts = [a]
        pre = []
        bn_caches = []
        masks = []
        n_hidden = len(self.config.hidden)
        for i in range(n_hidden):
            z = a @ self.params[f"W{i}"].T + self.params[f"b_head{i}"]
            bn_out, bn_cache = self.bn_layers[i].forward(
                z, self.params[f"gamma{i}"], self.params[f"beta{i}"], train=train
            )
            h = np.maximum(bn_out, 0.0)
            if train and p > 0.0:
                h, mask = _dropout_forward(h, p, rng)
                masks.append(mask)
            else:
                masks.append(None)
            pre.append(bn_out)
            bn_caches.append(bn_cache)
            acts.append(h)
            a = h
        out_i = n_hidden
        logits = a @ self.params[f"W{out_i}"].T + self.params[f"b_head{out_i}"]
        probs = softmax(logits)
        cache = {
            "X": Xm,
            "stage1": stage1_cache,
            "acts": acts,
            "pre": pre,
            "bn": bn_caches,
            "masks": masks,
            "train": train,
        }
        return (probs[0] if single else probs, cache)

    def backward(self, probs, cache, y) -> dict:
        n = probs.shape[0]
        l2 = self.config.l2
        p = self.config.dropout
        grads = {}
        n_hidden = len(self.config.hidden)

        delta = (probs - one_hot(y, self.n_classes)) / n
        out_i = n_hidden
        grads[f"W{out_i}"] = delta.T @ cache["acts"][out_i] + 2.0 * l2 * self.params[f"W{out_i}"]
        grads[f"b_head{out_i}"] = delta.sum(axis=0)
        da = delta @ self.params[f"W{out_i}"]
        for i in range(n_hidden - 1, -1, -1):
            if cache["train"] and cache["masks"][i] is not None:
                da = da * cache["masks"][i] / (1.0 - p)
            dbn_out = da * (cache["pre"][i] > 0.0)
            dz, dgamma, dbeta = BatchNormLayer.backward(dbn_out, cache["bn"][i])
            grads[f"gamma{i}"] = dgamma
            grads[f"beta{i}"] = dbeta
            grads[f"W{i}"] = dz.T @ cache["acts"][i] + 2.0 * l2 * self.params[f"W{i}"]
            grads[f"b_head{i}"] = dz.sum(axis=0)
            da = dz @ self.params[f"W{i}"]

        # back through the univariate stacks
        dh3 = da.reshape(n, self.d_in, self.u)
        z1, h1, z2, h2, z3 = cache["stage1"]
        dz3 = dh3 * (z3 > 0.0)
        grads["U3"] = np.einsum("ndi,ndo->dio", h2, dz3) + 2.0 * l2 * self.params["U3"]
        grads["b3"] = dz3.sum(axis=0)
        dh2 = np.einsum("ndo,dio->ndi", dz3, self.params["U3"])
        dz2 = dh2 * (z2 > 0.0)
        grads["U2"] = np.einsum("ndi,ndo->dio", h1, dz2) + 2.0 * l2 * self.params["U2"]
        grads["b2"] = dz2.sum(axis=0)
        dh1 = np.einsum("ndo,dio->ndi", dz2, self.params["U2"])
        dz1 = dh1 * (z1 > 0.0)
        grads["U1"] = (cache["X"][:, :, None] * dz1).sum(axis=0) + 2.0 * l2 * self.params["U1"]
        grads["b1"] = dz1.sum(axis=0)
        return grads

    def loss(self, probs, y) -> float:
        penalty = 0.0
        for key in ("U1", "U2", "U3"):
            penalty += float(np.sum(self.params[key] ** 2))
        for i in range(len(self.head_sizes) - 1):
            W = self.params[f"W{i}"]
            penalty += float(np.sum(W * W))
        return cross_entropy(probs, y) + self.config.l2 * penalty

    def predict_proba(self, X):
        probs, _ = self.forward(X, train=False)
        return probs

    def to_payload(self) -> dict:
        from .serialize import encode_array

        return {
            "d_in": self.d_in,
            "config": _config_dict(self.config),
            "params": {k: encode_array(v) for k, v in self.params.items()},
            "running": [
                {"mean": encode_array(bn.running_mean), "var": encode_array(bn.running_var)}
                for bn in self.bn_layers
            ],
        }

    @classmethod
    def from_payload(cls, obj: dict) -> "KanModel":
        from .serialize import decode_array

        cfg = KanConfig(**{**obj["config"], "hidden": tuple(obj["config"]["hidden"])})
        params = {k: decode_array(v) for k, v in obj["params"].items()}
        bn_layers = []
        for i, stats in enumerate(obj["running"]):
            bn = BatchNormLayer(cfg.hidden[i])
            bn.running_mean = decode_array(stats["mean"])
            bn.running_var = decode_array(stats["var"])
            bn_layers.append(bn)
        return cls(d_in=obj["d_in"], config=cfg, params=params, bn_layers=bn_layers)


def train_kan(train: Dataset, test: Dataset, config: KanConfig | None = None, seed: int | None = None):
    """Adam + StepLR training with early stopping on the test cross-entropy.

    The learning rate is multiplied by gamma every step_size epochs.
    Training halts after `patience` epochs without test-loss improvement
    and the best parameters are restored. Trailing batches of size 1 are
    skipped (train-mode batchnorm needs >= 2 rows).
    """
    cfg = config or KanConfig()
    if seed is None:
        seed = cfg.seed
    model = KanModel(train.d, cfg)
    adam = AdamState(model.params)
    rng = child_rng(seed, "kan_train")
    stopper = EarlyStopper(cfg.patience)
    best_params = None
    best_running = None
    log = TrainLog()
    t0 = time.perf_counter()
    n = train.n
    try:
        for epoch in range(cfg.epochs):
            lr = step_lr(cfg.learning_rate, epoch, cfg.step_size, cfg.gamma)
            perm = rng.permutation(n)
            for start in range(0, n, cfg.batch_size):
                idx = perm[start : start + cfg.batch_size]
                if idx.size < 2:
                    continue
                probs, cache = model.forward(train.features[idx], train=True, rng=rng)
                grads = model.backward(probs, cache, train.labels[idx])
                adam_step(adam, model.params, grads, lr)
            tl, ta, va, vl = _epoch_metrics(model, train, test)
            if not math.isfinite(tl):
                raise DivergenceError(f"kan training diverged at epoch {epoch}")
            log.append(epoch, tl, ta, va, vl)
            stop = stopper.update(epoch, vl)
            if stopper.improved:
                best_params = {k: v.copy() for k, v in model.params.items()}
                best_running = [
                    (bn.running_mean.copy(), bn.running_var.copy()) for bn in model.bn_layers
                ]
            if stop:
                break
    except DivergenceError as exc:
        exc.log = log
        raise
    if best_params is not None:
        model.params = best_params
        for bn, (mean, var) in zip(model.bn_layers, best_running):
            bn.running_mean = mean
            bn.running_var = var
    log.wall_time = time.perf_counter() - t0
    return model, log
