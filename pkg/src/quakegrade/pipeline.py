"""Pipeline configuration, stage orchestration, and model artifacts.

Stage order under ``paper`` protocol: load -> anomaly filter -> balance ->
select -> split. Under ``leakage_safe``: load -> split, then filtering,
balancing, and selector fitting touch the training portion only.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import (
    Dataset,
    FeatureSchema,
    GORKHA_SCHEMA,
    LabelEncoding,
    correlation_matrix,
    describe_numeric,
    frequency_table,
    load_csv,
    load_features_csv,
    stratified_split,
    stratified_subsample,
)
from .ensemble import StackingEnsemble, VotingEnsemble, fit_bagging, fit_stacking
from .errors import ConfigError
from .learners import (
    AdaBoostConfig,
    ForestConfig,
    GbmConfig,
    LogisticConfig,
    TreeConfig,
    fit_adaboost,
    fit_forest,
    fit_gbm,
    fit_logistic,
    fit_tree,
)
from .metrics import class_metrics, confusion_matrix, render_report, report_from_json, roc_auc_ovr
from .neural import FfnConfig, KanConfig, train_ffn, train_kan
from .preprocess import SelectorState, filter_anomalies, fit_isolation_forest, select_k_best
from .resample import ResamplePlan, balance
from .rng import child_rng
from .serialize import (
    FORMAT_VERSION,
    dumps_canonical,
    model_from_doc,
    model_kind,
    model_to_doc,
)
from .tune import CvSpec, ParamGrid, grid_search, random_search

PROTOCOLS = ("leakage_safe", "paper")

MAX_DERIVED_SEED = 2**63


def _check_keys(obj: dict, allowed, where: str):
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {where}")


@dataclass
class DatasetConfig:
    path: str | None = None
    schema: FeatureSchema = GORKHA_SCHEMA
    subsample: int | None = None

    @classmethod
    def from_json(cls, obj: dict) -> "DatasetConfig":
        _check_keys(obj, ("path", "schema", "subsample"), "dataset")
        schema = FeatureSchema.from_json(obj["schema"]) if obj.get("schema") else GORKHA_SCHEMA
        return cls(path=obj.get("path"), schema=schema, subsample=obj.get("subsample"))

    def to_json(self) -> dict:
        return {
            "path": self.path,
            "schema": self.schema.to_json(),
            "subsample": self.subsample,
        }


@dataclass
class AnomalyConfig:
    enabled: bool = True
    n_trees: int = 100
    subsample: int = 256
    contamination: float = 0.02

    @classmethod
    def from_json(cls, obj: dict) -> "AnomalyConfig":
        _check_keys(obj, ("enabled", "n_trees", "subsample", "contamination"), "anomaly")
        return cls(**obj)

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ResampleConfig:
    enabled: bool = True
    strategy: str = "median"
    targets: dict | None = None
    smote_k: int = 5

    @classmethod
    def from_json(cls, obj: dict) -> "ResampleConfig":
        _check_keys(obj, ("enabled", "strategy", "targets", "smote_k"), "resample")
        cfg = cls(**obj)
        if cfg.strategy not in ("median", "targets"):
            raise ConfigError(f"resample.strategy must be 'median' or 'targets', got {cfg.strategy!r}")
        if cfg.strategy == "targets" and not cfg.targets:
            raise ConfigError("resample.strategy 'targets' requires resample.targets")
        return cfg

    def to_json(self) -> dict:
        return dict(self.__dict__)

    def plan_for(self, ds: Dataset, seed: int) -> ResamplePlan:
        if self.strategy == "median":
            return ResamplePlan.median_plan(ds, smote_k=self.smote_k, seed=seed)
        targets = {int(k): int(v) for k, v in self.targets.items()}
        return ResamplePlan(targets=targets, smote_k=self.smote_k, seed=seed)


@dataclass
class SelectorConfig:
    enabled: bool = True
    k: int = 20

    @classmethod
    def from_json(cls, obj: dict) -> "SelectorConfig":
        _check_keys(obj, ("enabled", "k"), "selector")
        return cls(**obj)

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass
class TuningConfig:
    model: str = "gbm"
    params: dict = field(default_factory=dict)
    method: str = "grid"
    n_samples: int = 10
    grid: dict = field(default_factory=dict)
    cv_k: int = 5
    cv_stratified: bool = True
    loss: str = "one_minus_macro_f1"

    @classmethod
    def from_json(cls, obj: dict) -> "TuningConfig":
        _check_keys(
            obj,
            ("model", "params", "method", "n_samples", "grid", "cv_k", "cv_stratified", "loss"),
            "tuning",
        )
        cfg = cls(**obj)
        if cfg.method not in ("grid", "random"):
            raise ConfigError(f"tuning.method must be 'grid' or 'random', got {cfg.method!r}")
        return cfg

    def to_json(self) -> dict:
        return dict(self.__dict__)


def default_roster() -> list:
    """The ten-algorithm reproduction roster; the LightGBM and
    XGBClassifier rows are stood in by the in-package boosting learner."""
    rf = {"kind": "random_forest", "params": {"n_trees": 100}}
    gbm = {"kind": "gbm", "params": {"n_rounds": 100, "max_depth": 3}}
    logit = {"kind": "logistic", "params": {"epochs": 100}}
    bases = [rf, gbm, logit]
    return [
        {"name": "Logistic Regression", **logit},
        {"name": "Decision Tree", "kind": "decision_tree", "params": {}},
        {"name": "Random Forest", **rf},
        {"name": "GBM", **gbm},
        {"name": "AdaBoost", "kind": "adaboost", "params": {"n_rounds": 50}},
        {"name": "LightGBM", "kind": "gbm", "params": {"n_rounds": 150, "max_depth": 4}},
        {"name": "XGBClassifier", "kind": "gbm", "params": {"n_rounds": 120, "max_depth": 3}},
        {"name": "Voting Classifier", "kind": "voting", "params": {"members": bases}},
        {"name": "Stacking Classifier", "kind": "stacking", "params": {"bases": bases, "oof_folds": 5}},
        {"name": "Bagging Classifier", "kind": "bagging", "params": {"base": {"kind": "decision_tree", "params": {}}, "m": 25}},
    ]


@dataclass
class PipelineConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    protocol: str = "leakage_safe"
    test_fraction: float = 0.2
    anomaly: AnomalyConfig = field(default_factory=AnomalyConfig)
    resample: ResampleConfig = field(default_factory=ResampleConfig)
    selector: SelectorConfig = field(default_factory=SelectorConfig)
    models: list = field(default_factory=default_roster)
    tuning: TuningConfig = field(default_factory=TuningConfig)
    out_dir: str = "out"
    seed: int = 0
    threads: int = 1

    TOP_KEYS = (
        "dataset",
        "protocol",
        "test_fraction",
        "anomaly",
        "resample",
        "selector",
        "models",
        "tuning",
        "out_dir",
        "seed",
        "threads",
    )

    @classmethod
    def from_json(cls, obj: dict) -> "PipelineConfig":
        _check_keys(obj, cls.TOP_KEYS, "config")
        cfg = cls()
        if "dataset" in obj:
            cfg.dataset = DatasetConfig.from_json(obj["dataset"])
        if "protocol" in obj:
            cfg.protocol = obj["protocol"]
        if "test_fraction" in obj:
            cfg.test_fraction = float(obj["test_fraction"])
        if "anomaly" in obj:
            cfg.anomaly = AnomalyConfig.from_json(obj["anomaly"])
        if "resample" in obj:
            cfg.resample = ResampleConfig.from_json(obj["resample"])
        if "selector" in obj:
            cfg.selector = SelectorConfig.from_json(obj["selector"])
        if "models" in obj:
            cfg.models = [_check_roster_entry(e) for e in obj["models"]]
        if "tuning" in obj:
            cfg.tuning = TuningConfig.from_json(obj["tuning"])
        if "out_dir" in obj:
            cfg.out_dir = obj["out_dir"]
        if "seed" in obj:
            cfg.seed = int(obj["seed"])
        if "threads" in obj:
            cfg.threads = int(obj["threads"])
        if cfg.protocol not in PROTOCOLS:
            raise ConfigError(f"protocol must be one of {PROTOCOLS}, got {cfg.protocol!r}")
        return cfg

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                obj = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        return cls.from_json(obj)

    def to_json(self) -> dict:
        return {
            "dataset": self.dataset.to_json(),
            "protocol": self.protocol,
            "test_fraction": self.test_fraction,
            "anomaly": self.anomaly.to_json(),
            "resample": self.resample.to_json(),
            "selector": self.selector.to_json(),
            "models": self.models,
            "tuning": self.tuning.to_json(),
            "out_dir": self.out_dir,
            "seed": self.seed,
            "threads": self.threads,
        }

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_json(), sort_keys=True).encode()).hexdigest()


MODEL_KIND_NAMES = (
    "logistic",
    "decision_tree",
    "random_forest",
    "gbm",
    "adaboost",
    "voting",
    "stacking",
    "bagging",
    "ffn",
    "kan",
)


def _check_roster_entry(entry: dict) -> dict:
    _check_keys(entry, ("name", "kind", "params"), "models[]")
    if "name" not in entry or "kind" not in entry:
        raise ConfigError("each roster entry needs 'name' and 'kind'")
    if entry["kind"] not in MODEL_KIND_NAMES:
        raise ConfigError(f"unknown model kind {entry['kind']!r}")
    entry.setdefault("params", {})
    return entry


# ---------------------------------------------------------------------------
# model construction


def _classical_fit(kind: str, params: dict):
    if kind == "logistic":
        return lambda ds, seed: fit_logistic(ds, LogisticConfig(**params, seed=seed))
    if kind == "decision_tree":
        return lambda ds, seed: fit_tree(ds, TreeConfig(**params, seed=seed))
    if kind == "random_forest":
        return lambda ds, seed: fit_forest(ds, ForestConfig(**params, seed=seed))
    if kind == "gbm":
        return lambda ds, seed: fit_gbm(ds, GbmConfig(**params, seed=seed))
    if kind == "adaboost":
        return lambda ds, seed: fit_adaboost(ds, AdaBoostConfig(**params, seed=seed))
    return None


def build_fit_fn(kind: str, params: dict):
    """(train_ds, seed) -> fitted model, for any configured model kind.

    Neural kinds fitted through this generic path monitor their own
    training split, so KAN early stopping then tracks training loss.
    """
    params = dict(params)
    fit = _classical_fit(kind, params)
    if fit is not None:
        return fit
    if kind == "ffn":
        cfg_params = {k: (tuple(v) if k == "hidden" else v) for k, v in params.items()}
        return lambda ds, seed: train_ffn(ds, ds, FfnConfig(**cfg_params, seed=seed))[0]
    if kind == "kan":
        cfg_params = {k: (tuple(v) if k == "hidden" else v) for k, v in params.items()}
        return lambda ds, seed: train_kan(ds, ds, KanConfig(**cfg_params, seed=seed))[0]
    if kind == "voting":
        members = params.get("members", [])
        weights = params.get("weights")
        mode = params.get("mode", "soft")
        if not members:
            raise ConfigError("voting needs a 'members' list")
        member_fits = [build_fit_fn(m["kind"], m.get("params", {})) for m in members]

        def fit_voting(ds, seed):
            fitted = []
            for i, mf in enumerate(member_fits):
                member_seed = int(child_rng(seed, "voting_member", i).integers(0, MAX_DERIVED_SEED))
                fitted.append(mf(ds, member_seed))
            return VotingEnsemble(fitted, weights=weights, mode=mode)

        return fit_voting
    if kind == "stacking":
        bases = params.get("bases", [])
        if not bases:
            raise ConfigError("stacking needs a 'bases' list")
        base_fits = [build_fit_fn(b["kind"], b.get("params", {})) for b in bases]
        meta_entry = params.get("meta")
        meta_fit = (
            build_fit_fn(meta_entry["kind"], meta_entry.get("params", {})) if meta_entry else None
        )
        oof_folds = params.get("oof_folds", 5)
        return lambda ds, seed: fit_stacking(ds, base_fits, meta_fit, oof_folds, seed)
    if kind == "bagging":
        base = params.get("base")
        if not base:
            raise ConfigError("bagging needs a 'base' entry")
        base_fit = build_fit_fn(base["kind"], base.get("params", {}))
        M = params.get("m", 10)
        return lambda ds, seed: fit_bagging(ds, base_fit, M, seed)
    raise ConfigError(f"unknown model kind {kind!r}")


def fit_roster_entry(entry: dict, train: Dataset, test: Dataset, seed: int):
    """Fit one roster entry; neural kinds also return their TrainLog."""
    kind = entry["kind"]
    params = dict(entry.get("params", {}))
    if kind == "ffn":
        cfg_params = {k: (tuple(v) if k == "hidden" else v) for k, v in params.items()}
        model, log = train_ffn(train, test, FfnConfig(**cfg_params, seed=seed))
        return model, log
    if kind == "kan":
        cfg_params = {k: (tuple(v) if k == "hidden" else v) for k, v in params.items()}
        model, log = train_kan(train, test, KanConfig(**cfg_params, seed=seed))
        return model, log
    return build_fit_fn(kind, params)(train, seed), None


# ---------------------------------------------------------------------------
# stage orchestration


@dataclass
class PreparedData:
    train: Dataset
    test: Dataset
    selector: SelectorState | None
    encoding: LabelEncoding
    schema: FeatureSchema


def load_dataset(cfg: PipelineConfig) -> Dataset:
    if not cfg.dataset.path:
        raise ConfigError("dataset.path is required")
    ds = load_csv(cfg.dataset.path, cfg.dataset.schema)
    if cfg.dataset.subsample:
        ds = stratified_subsample(ds, int(cfg.dataset.subsample), cfg.seed)
    return ds


def _filter_stage(ds: Dataset, cfg: PipelineConfig) -> Dataset:
    sub = min(cfg.anomaly.subsample, ds.n)
    model = fit_isolation_forest(ds, n_trees=cfg.anomaly.n_trees, subsample=sub, seed=cfg.seed)
    return filter_anomalies(ds, model, cfg.anomaly.contamination)


def prepare(cfg: PipelineConfig, balance_train: bool = True) -> PreparedData:
    """Run the preprocessing stages in the protocol's order."""
    ds = load_dataset(cfg)
    schema = ds.schema
    encoding = ds.encoding
    selector = None
    if cfg.protocol == "paper":
        if cfg.anomaly.enabled:
            ds = _filter_stage(ds, cfg)
        if cfg.resample.enabled and balance_train:
            ds = balance(ds, cfg.resample.plan_for(ds, cfg.seed))
        if cfg.selector.enabled:
            selector, ds = select_k_best(ds, min(cfg.selector.k, ds.d))
        train, test = stratified_split(ds, cfg.test_fraction, cfg.seed)
    else:
        train, test = stratified_split(ds, cfg.test_fraction, cfg.seed)
        if cfg.anomaly.enabled:
            train = _filter_stage(train, cfg)
        if cfg.resample.enabled and balance_train:
            train = balance(train, cfg.resample.plan_for(train, cfg.seed))
        if cfg.selector.enabled:
            selector, train = select_k_best(train, min(cfg.selector.k, train.d))
            test = selector.transform(test)
    return PreparedData(train=train, test=test, selector=selector, encoding=encoding, schema=schema)


# ---------------------------------------------------------------------------
# artifacts


@dataclass
class ArtifactBundle:
    name: str
    model: object
    selector: SelectorState | None
    encoding: LabelEncoding
    schema: FeatureSchema
    meta: dict


def save_artifact(path, name, model, selector, encoding, schema, meta) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "kind": model_kind(model),
        "model": model_to_doc(model),
        "selector": selector.to_payload() if selector is not None else None,
        "encoding": encoding.to_json(),
        "schema": schema.to_json(),
        "meta": meta,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_canonical(doc))


def load_artifact(path) -> ArtifactBundle:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if doc.get("format_version") != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported format_version {doc.get('format_version')!r}")
    selector = SelectorState.from_payload(doc["selector"]) if doc.get("selector") else None
    return ArtifactBundle(
        name=doc["meta"].get("name", ""),
        model=model_from_doc(doc["model"]),
        selector=selector,
        encoding=LabelEncoding.from_json(doc["encoding"]),
        schema=FeatureSchema.from_json(doc["schema"]),
        meta=doc["meta"],
    )


def _slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "_", name.lower()).strip("_")


# ---------------------------------------------------------------------------
# commands


def cmd_describe(cfg: PipelineConfig) -> list:
    """Write numeric stats, frequency tables, and the correlation matrix."""
    ds = load_dataset(cfg)
    stats = describe_numeric(ds)
    freq = {}
    for name, kind in ds.schema.columns:
        if kind in ("categorical", "binary"):
            n_unique, mode_code, mode_freq = frequency_table(ds, name)
            freq[name] = {
                "n_unique": n_unique,
                "mode_code": mode_code,
                "mode_frequency": mode_freq,
            }
    corr = correlation_matrix(ds)
    corr_json = {
        "columns": corr.columns,
        "matrix": [[None if np.isnan(v) else v for v in row] for row in corr.matrix],
        "undefined": corr.undefined,
    }

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for fname, payload in (
        ("numeric_stats.json", stats),
        ("frequency_tables.json", freq),
        ("correlation_matrix.json", corr_json),
    ):
        p = out / fname
        with open(p, "w", encoding="utf-8") as fh:
            fh.write(dumps_canonical(payload))
        paths.append(p)
    return paths


def cmd_train(cfg: PipelineConfig) -> Path:
    """Fit the configured roster and persist one artifact per model plus
    a manifest carrying the config digest."""
    prepared = prepare(cfg)
    digest = cfg.digest()
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    entries = []
    for entry in cfg.models:
        name = entry["name"]
        seed = int(child_rng(cfg.seed, "roster", name).integers(0, MAX_DERIVED_SEED))
        model, log = fit_roster_entry(entry, prepared.train, prepared.test, seed)
        fname = f"model_{_slug(name)}.json"
        save_artifact(
            out / fname,
            name,
            model,
            prepared.selector,
            prepared.encoding,
            prepared.schema,
            meta={"name": name, "seed": cfg.seed, "config_digest": digest},
        )
        if log is not None:
            with open(out / f"train_log_{_slug(name)}.csv", "w", encoding="utf-8") as fh:
                fh.write(log.to_csv())
        entries.append({"name": name, "kind": model_kind(model), "file": fname})

    manifest = {
        "format_version": FORMAT_VERSION,
        "config_digest": digest,
        "seed": cfg.seed,
        "artifacts": entries,
    }
    manifest_path = out / "manifest.json"
    with open(manifest_path, "w", encoding="utf-8") as fh:
        fh.write(dumps_canonical(manifest))
    return manifest_path


def _artifact_paths(cfg: PipelineConfig, artifacts=None) -> list:
    if artifacts:
        return [Path(p) for p in artifacts]
    manifest_path = Path(cfg.out_dir) / "manifest.json"
    if not manifest_path.exists():
        raise FileNotFoundError(f"no manifest at {manifest_path}; run train first")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        manifest = json.load(fh)
    return [Path(cfg.out_dir) / e["file"] for e in manifest["artifacts"]]


def cmd_evaluate(cfg: PipelineConfig, artifacts=None) -> dict:
    """Evaluate artifacts on the protocol's test split and write the
    per-class report as JSON, aligned text, and CSV."""
    paths = _artifact_paths(cfg, artifacts)
    if not paths:
        raise ValueError("no artifacts to evaluate")
    prepared = prepare(cfg)
    test = prepared.test

    reports = []
    for path in paths:
        bundle = load_artifact(path)
        model = bundle.model
        if model.d_in != test.d:
            raise ValueError(
                f"artifact {path} expects {model.d_in} features, test split has {test.d}"
            )
        proba = model.predict_proba(test.features)
        pred = np.argmax(proba, axis=1)
        report = class_metrics(confusion_matrix(test.labels, pred), model=bundle.name)
        try:
            report.auc = roc_auc_ovr(test.labels, proba)
        except ValueError:
            report.flags.append("auc_unavailable")
        reports.append(report)

    rendered = render_report(reports)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        fh.write(dumps_canonical({"format_version": FORMAT_VERSION, "reports": rendered["json"]}))
    with open(out / "report.txt", "w", encoding="utf-8") as fh:
        fh.write(rendered["text"])
    with open(out / "report.csv", "w", encoding="utf-8") as fh:
        fh.write(rendered["csv"])
    return rendered


def cmd_report(cfg: PipelineConfig) -> dict:
    """Re-render report.txt / report.csv from a stored report.json."""
    path = Path(cfg.out_dir) / "report.json"
    if not path.exists():
        raise FileNotFoundError(f"no report at {path}; run evaluate first")
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    reports = [report_from_json(obj) for obj in doc["reports"]]
    rendered = render_report(reports)
    out = Path(cfg.out_dir)
    with open(out / "report.txt", "w", encoding="utf-8") as fh:
        fh.write(rendered["text"])
    with open(out / "report.csv", "w", encoding="utf-8") as fh:
        fh.write(rendered["csv"])
    return rendered


def cmd_tune(cfg: PipelineConfig) -> Path:
    """Cross-validated search over the configured grid.

    Each fold's training portion is rebalanced independently; validation
    folds are never resampled.
    """
    prepared = prepare(cfg, balance_train=False)
    tuning = cfg.tuning
    factory = lambda params: build_fit_fn(tuning.model, {**tuning.params, **params})
    grid = ParamGrid(dict(tuning.grid))
    spec = CvSpec(k=tuning.cv_k, stratified=tuning.cv_stratified, seed=cfg.seed, loss=tuning.loss)
    fold_prep = None
    if cfg.resample.enabled:
        fold_prep = lambda ds, seed: balance(ds, cfg.resample.plan_for(ds, seed))
    if tuning.method == "grid":
        result = grid_search(prepared.train, grid, factory, spec, fold_prep=fold_prep)
    else:
        result = random_search(prepared.train, grid, tuning.n_samples, factory, spec, fold_prep=fold_prep)

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "tune_result.json"
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_canonical(result.to_json()))
    return path


def cmd_predict(artifact_path, input_csv, output_csv) -> Path:
    """Predict raw grades for a feature CSV using a stored artifact.

    Output rows: row index, decoded damage grade, and the three class
    probabilities (summing to 1).
    """
    bundle = load_artifact(artifact_path)
    feats = load_features_csv(input_csv, bundle.schema, bundle.encoding)
    if bundle.selector is not None:
        feats = feats[:, bundle.selector.selected]
    proba = bundle.model.predict_proba(feats)
    pred = np.argmax(proba, axis=1)

    lines = ["row,predicted_grade,p0,p1,p2"]
    for i in range(proba.shape[0]):
        grade = bundle.encoding.decode_label(int(pred[i]))
        probs = ",".join(repr(float(v)) for v in proba[i])
        lines.append(f"{i},{grade},{probs}")
    output_csv = Path(output_csv)
    with open(output_csv, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    return output_csv
