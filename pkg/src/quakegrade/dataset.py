"""Tabular dataset loading, label encoding, summaries, and splitting.

A `Dataset` is a dense float64 feature matrix plus an integer label
vector, immutable after construction. Categorical columns are integer
encoded in ascending lexicographic order of the raw value, and the raw
damage grades 1..3 map onto the internal classes 0..2 the same way.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, SchemaError, StratificationError
from .rng import child_rng

COLUMN_KINDS = ("numeric", "categorical", "binary")

N_CLASSES = 3


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered feature columns (name, kind) plus the target column name."""

    columns: tuple[tuple[str, str], ...]
    target: str

    def __post_init__(self):
        names = [name for name, _ in self.columns]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate column names in schema")
        if self.target in names:
            raise SchemaError(f"target column {self.target!r} also listed as a feature")
        for name, kind in self.columns:
            if kind not in COLUMN_KINDS:
                raise SchemaError(f"column {name!r} has unknown kind {kind!r}")

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.columns)

    def kind_of(self, name: str) -> str:
        for col, kind in self.columns:
            if col == name:
                return kind
        raise SchemaError(f"unknown column {name!r}")

    def index_of(self, name: str) -> int:
        for i, (col, _) in enumerate(self.columns):
            if col == name:
                return i
        raise SchemaError(f"unknown column {name!r}")

    def subset(self, indices) -> "FeatureSchema":
        cols = tuple(self.columns[i] for i in indices)
        return FeatureSchema(columns=cols, target=self.target)

    def to_json(self) -> dict:
        return {
            "columns": [{"name": n, "kind": k} for n, k in self.columns],
            "target": self.target,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FeatureSchema":
        cols = tuple((c["name"], c["kind"]) for c in obj["columns"])
        return cls(columns=cols, target=obj["target"])


# Columns of the public Gorkha building-damage CSV that the default
# pipeline consumes; extra columns in the file are ignored.
GORKHA_SCHEMA = FeatureSchema(
    columns=(
        ("age", "numeric"),
        ("area_percentage", "numeric"),
        ("height_percentage", "numeric"),
        ("count_families", "numeric"),
        ("count_floors_pre_eq", "numeric"),
        ("land_surface_condition", "categorical"),
        ("foundation_type", "categorical"),
        ("roof_type", "categorical"),
        ("ground_floor_type", "categorical"),
        ("other_floor_type", "categorical"),
        ("position", "categorical"),
        ("plan_configuration", "categorical"),
        ("legal_ownership_status", "categorical"),
        ("has_superstructure_mud_mortar_stone", "binary"),
        ("has_superstructure_mud_mortar_brick", "binary"),
        ("has_superstructure_cement_mortar_brick", "binary"),
        ("has_superstructure_timber", "binary"),
        ("has_superstructure_bamboo", "binary"),
        ("has_secondary_use_rental", "binary"),
    ),
    target="damage_grade",
)


@dataclass(frozen=True)
class LabelEncoding:
    """Per-column raw-category -> integer-code maps, plus the target map.

    Codes are contiguous from 0 in ascending lexicographic order of the
    raw value, which sends raw damage grades "1","2","3" to 0,1,2.
    """

    by_column: dict = field(default_factory=dict)
    target: dict = field(default_factory=dict)

    def encode_value(self, column: str, raw: str) -> int:
        mapping = self.by_column[column]
        if raw not in mapping:
            raise DataError(f"unseen category {raw!r} in column {column!r}")
        return mapping[raw]

    def decode_value(self, column: str, code: int):
        for raw, c in self.by_column[column].items():
            if c == code:
                return raw
        raise DataError(f"code {code} not present in column {column!r}")

    def decode_label(self, code: int):
        for raw, c in self.target.items():
            if c == code:
                return raw
        raise DataError(f"label code {code} has no raw grade")

    def to_json(self) -> dict:
        return {"by_column": self.by_column, "target": self.target}

    @classmethod
    def from_json(cls, obj: dict) -> "LabelEncoding":
        return cls(
            by_column={k: dict(v) for k, v in obj["by_column"].items()},
            target=dict(obj["target"]),
        )


def _lexicographic_codes(raw_values) -> dict:
    return {raw: code for code, raw in enumerate(sorted(set(raw_values)))}


@dataclass
class Dataset:
    """Encoded feature matrix, integer labels, and their provenance."""

    features: np.ndarray
    labels: np.ndarray
    schema: FeatureSchema
    encoding: LabelEncoding = field(default_factory=LabelEncoding)

    def __post_init__(self):
        feats = np.ascontiguousarray(self.features, dtype=np.float64)
        labels = np.ascontiguousarray(self.labels, dtype=np.int64)
        if feats.ndim != 2:
            raise DataError(f"features must be 2-D, got shape {feats.shape}")
        if labels.ndim != 1 or labels.shape[0] != feats.shape[0]:
            raise DataError("labels length must equal the feature row count")
        if feats.shape[1] != len(self.schema.columns):
            raise SchemaError(
                f"schema lists {len(self.schema.columns)} columns, features have {feats.shape[1]}"
            )
        if feats.size and not np.isfinite(feats).all():
            raise DataError("features contain non-finite values")
        if labels.size and labels.min() < 0:
            raise DataError("labels must be non-negative integers")
        feats.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def class_counts(self, n_classes: int = N_CLASSES) -> np.ndarray:
        return np.bincount(self.labels, minlength=n_classes)

    def take_rows(self, indices) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(self.features[idx], self.labels[idx], self.schema, self.encoding)


def from_arrays(X, y, names=None, target: str = "label") -> Dataset:
    """Wrap raw arrays in a Dataset with a generic all-numeric schema."""
    X = np.asarray(X, dtype=np.float64)
    if names is None:
        names = [f"x{i}" for i in range(X.shape[1])]
    schema = FeatureSchema(columns=tuple((n, "numeric") for n in names), target=target)
    return Dataset(X, np.asarray(y, dtype=np.int64), schema)


def load_csv(path, schema: FeatureSchema = GORKHA_SCHEMA) -> Dataset:
    """Load and encode a CSV whose header covers the schema's columns.

    Numeric cells parse as reals, binary cells must be 0/1, categorical
    cells are label-encoded lexicographically. Raw target values encode
    the same way (grades 1..3 become classes 0..2). Missing cells and
    unparseable values are hard errors naming the row and column.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty data section") from None
        positions = {name: i for i, name in enumerate(header)}
        needed = list(schema.names) + [schema.target]
        for name in needed:
            if name not in positions:
                raise SchemaError(f"{path}: missing column {name!r}")

        numeric_cells: list[list[float]] = []
        raw_cells: dict[str, list[str]] = {
            name: [] for name, kind in schema.columns if kind == "categorical"
        }
        raw_target: list[str] = []
        n_header = len(header)
        for row_no, row in enumerate(reader, start=2):
            if len(row) != n_header:
                raise DataError(f"{path}: row {row_no} has {len(row)} cells, expected {n_header}")
            values = []
            for name, kind in schema.columns:
                cell = row[positions[name]]
                if kind == "categorical":
                    if cell == "":
                        raise DataError(f"{path}: row {row_no}, column {name!r}: missing value")
                    raw_cells[name].append(cell)
                    values.append(0.0)  # placeholder, filled after encoding
                else:
                    try:
                        parsed = float(cell)
                    except ValueError:
                        raise DataError(
                            f"{path}: row {row_no}, column {name!r}: unparseable cell {cell!r}"
                        ) from None
                    if not math.isfinite(parsed):
                        raise DataError(
                            f"{path}: row {row_no}, column {name!r}: non-finite value {cell!r}"
                        )
                    if kind == "binary" and parsed not in (0.0, 1.0):
                        raise DataError(
                            f"{path}: row {row_no}, column {name!r}: binary value must be 0 or 1, got {cell!r}"
                        )
                    values.append(parsed)
            target_cell = row[positions[schema.target]]
            if target_cell == "":
                raise DataError(f"{path}: row {row_no}, column {schema.target!r}: missing value")
            raw_target.append(target_cell)
            numeric_cells.append(values)

    if not numeric_cells:
        raise DataError(f"{path}: empty data section")

    by_column = {name: _lexicographic_codes(raws) for name, raws in raw_cells.items()}
    target_codes = _lexicographic_codes(raw_target)
    if len(target_codes) > N_CLASSES:
        raise DataError(
            f"{path}: target has {len(target_codes)} distinct grades, at most {N_CLASSES} supported"
        )
    encoding = LabelEncoding(by_column=by_column, target=target_codes)

    features = np.asarray(numeric_cells, dtype=np.float64)
    for j, (name, kind) in enumerate(schema.columns):
        if kind == "categorical":
            codes = by_column[name]
            features[:, j] = [codes[raw] for raw in raw_cells[name]]
    labels = np.asarray([target_codes[raw] for raw in raw_target], dtype=np.int64)
    return Dataset(features, labels, schema, encoding)


def load_features_csv(path, schema: FeatureSchema, encoding: LabelEncoding) -> np.ndarray:
    """Parse a feature-only CSV for prediction, using a fitted encoding.

    The target column may be absent. Unseen categorical values are hard
    errors naming the row, column, and value.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty data section") from None
        positions = {name: i for i, name in enumerate(header)}
        for name in schema.names:
            if name not in positions:
                raise SchemaError(f"{path}: missing column {name!r}")
        rows = []
        n_header = len(header)
        for row_no, row in enumerate(reader, start=2):
            if len(row) != n_header:
                raise DataError(f"{path}: row {row_no} has {len(row)} cells, expected {n_header}")
            values = []
            for name, kind in schema.columns:
                cell = row[positions[name]]
                if kind == "categorical":
                    codes = encoding.by_column.get(name, {})
                    if cell not in codes:
                        raise DataError(
                            f"{path}: row {row_no}, column {name!r}: unseen category {cell!r}"
                        )
                    values.append(float(codes[cell]))
                    continue
                try:
                    parsed = float(cell)
                except ValueError:
                    raise DataError(
                        f"{path}: row {row_no}, column {name!r}: unparseable cell {cell!r}"
                    ) from None
                if not math.isfinite(parsed):
                    raise DataError(f"{path}: row {row_no}, column {name!r}: non-finite value")
                if kind == "binary" and parsed not in (0.0, 1.0):
                    raise DataError(
                        f"{path}: row {row_no}, column {name!r}: binary value must be 0 or 1"
                    )
                values.append(parsed)
            rows.append(values)
    if not rows:
        raise DataError(f"{path}: empty data section")
    return np.asarray(rows, dtype=np.float64)


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def stratified_split(ds: Dataset, test_fraction: float, seed: int):
    """Split into (train, test), per class taking round(count * fraction)
    test rows (at least 1). Row order within each part is preserved."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError(f"test_fraction must be in (0, 1), got {test_fraction}")
    labels = ds.labels
    classes = np.unique(labels)
    rng = child_rng(seed, "stratified_split")
    test_idx = []
    train_idx = []
    for c in classes:
        idx = np.nonzero(labels == c)[0]
        if idx.size < 2:
            raise StratificationError(f"class {int(c)} has {idx.size} instance(s), need >= 2")
        perm = rng.permutation(idx)
        t = max(1, _round_half_up(idx.size * test_fraction))
        test_idx.append(perm[:t])
        train_idx.append(perm[t:])
    test_rows = np.sort(np.concatenate(test_idx))
    train_rows = np.sort(np.concatenate(train_idx))
    return ds.take_rows(train_rows), ds.take_rows(test_rows)


def stratified_subsample(ds: Dataset, n_rows: int, seed: int) -> Dataset:
    """Deterministic stratified subsample of approximately n_rows rows."""
    if n_rows >= ds.n:
        return ds
    fraction = n_rows / ds.n
    rng = child_rng(seed, "stratified_subsample")
    keep = []
    for c in np.unique(ds.labels):
        idx = np.nonzero(ds.labels == c)[0]
        take = max(1, _round_half_up(idx.size * fraction))
        keep.append(rng.permutation(idx)[:take])
    return ds.take_rows(np.sort(np.concatenate(keep)))


def describe_numeric(ds: Dataset) -> dict:
    """Table-style summary of every numeric column, keyed by name.

    std is the sample standard deviation (n-1 denominator); quartiles use
    linear interpolation between order statistics. A single-row column
    reports std 0 with a flag.
    """
    out = {}
    for j, (name, kind) in enumerate(ds.schema.columns):
        if kind != "numeric":
            continue
        col = ds.features[:, j]
        flags = []
        if col.size == 1:
            std = 0.0
            flags.append("single_row")
        else:
            std = float(np.std(col, ddof=1))
        q25, med, q75 = np.percentile(col, [25, 50, 75])
        out[name] = {
            "count": int(col.size),
            "mean": float(np.mean(col)),
            "std": std,
            "min": float(np.min(col)),
            "q25": float(q25),
            "median": float(med),
            "q75": float(q75),
            "max": float(np.max(col)),
            "flags": flags,
        }
    if not out:
        raise SchemaError("describe_numeric requires at least one numeric column")
    return out


def frequency_table(ds: Dataset, column: str):
    """(n_unique, mode_code, mode_frequency) for a categorical or binary
    column; mode ties break toward the smallest code."""
    kind = ds.schema.kind_of(column)
    if kind == "numeric":
        raise SchemaError(f"column {column!r} is numeric, not categorical/binary")
    col = ds.features[:, ds.schema.index_of(column)].astype(np.int64)
    codes, counts = np.unique(col, return_counts=True)
    top = int(np.argmax(counts))  # codes ascending, first max = smallest code
    return int(codes.size), int(codes[top]), int(counts[top])


@dataclass
class CorrelationResult:
    columns: list
    matrix: np.ndarray
    undefined: list


def correlation_matrix(ds: Dataset) -> CorrelationResult:
    """Pearson correlations over numeric columns plus the encoded target.

    Zero-variance columns are reported as undefined (NaN row/column plus a
    flag) rather than silently zero. The diagonal is exactly 1 for defined
    columns.
    """
    numeric = [(j, name) for j, (name, kind) in enumerate(ds.schema.columns) if kind == "numeric"]
    if len(numeric) < 2:
        raise SchemaError("correlation_matrix requires at least 2 numeric columns")
    cols = [ds.features[:, j] for j, _ in numeric] + [ds.labels.astype(np.float64)]
    names = [name for _, name in numeric] + [ds.schema.target]
    k = len(cols)
    centered = []
    norms = np.empty(k)
    for i, col in enumerate(cols):
        c = col - col.mean()
        centered.append(c)
        norms[i] = math.sqrt(float(np.dot(c, c)))
    undefined = [names[i] for i in range(k) if norms[i] == 0.0]
    m = np.full((k, k), np.nan)
    for i in range(k):
        if norms[i] == 0.0:
            continue
        m[i, i] = 1.0
        for j in range(i + 1, k):
            if norms[j] == 0.0:
                continue
            r = float(np.dot(centered[i], centered[j])) / (norms[i] * norms[j])
            r = min(1.0, max(-1.0, r))
            m[i, j] = r
            m[j, i] = r
    return CorrelationResult(columns=names, matrix=m, undefined=undefined)
