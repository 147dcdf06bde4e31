"""Confusion-matrix metrics and per-class performance reports.

All metrics are plain ratios of integer counts. Undefined 0/0 cases are
reported as 0 with a flag so aggregate rows stay computable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

N_CLASSES = 3


def confusion_matrix(y_true, y_pred, n_classes: int = N_CLASSES) -> np.ndarray:
    """C[i, j] = count of true class i predicted as class j."""
    y_true = np.asarray(y_true, dtype=np.int64)
    y_pred = np.asarray(y_pred, dtype=np.int64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ValueError("y_true and y_pred must be 1-D of equal length")
    for name, arr in (("y_true", y_true), ("y_pred", y_pred)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise ValueError(f"{name} contains labels outside 0..{n_classes - 1}")
    C = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(C, (y_true, y_pred), 1)
    return C


@dataclass
class MetricsReport:
    """Per-class precision/recall/F1 plus overall and averaged metrics."""

    model: str = ""
    per_class: list = field(default_factory=list)
    accuracy: float = 0.0
    macro: dict = field(default_factory=dict)
    weighted: dict = field(default_factory=dict)
    auc: dict | None = None
    flags: list = field(default_factory=list)

    def to_json(self) -> dict:
        obj = {
            "model": self.model,
            "per_class": self.per_class,
            "accuracy": self.accuracy,
            "macro": self.macro,
            "weighted": self.weighted,
            "auc": self.auc,
            "flags": self.flags,
        }
        return obj


def class_metrics(C: np.ndarray, model: str = "") -> MetricsReport:
    """Compute the report for a confusion matrix.

    TP_c = C[c,c], FP_c = column sum - TP_c, FN_c = row sum - TP_c,
    F1 = 2PR/(P+R). 0/0 ratios are reported as 0 and flagged.
    """
    C = np.asarray(C, dtype=np.int64)
    total = int(C.sum())
    if total == 0:
        raise ValueError("empty confusion matrix")
    n_classes = C.shape[0]
    row = C.sum(axis=1)
    col = C.sum(axis=0)

    per_class = []
    flags = []
    for c in range(n_classes):
        tp = int(C[c, c])
        fp = int(col[c]) - tp
        fn = int(row[c]) - tp
        support = int(row[c])
        if tp + fp > 0:
            precision = tp / (tp + fp)
        else:
            precision = 0.0
            flags.append(f"class_{c}_precision_undefined")
        if tp + fn > 0:
            recall = tp / (tp + fn)
        else:
            recall = 0.0
            flags.append(f"class_{c}_recall_undefined")
        if precision + recall > 0:
            f1 = 2 * precision * recall / (precision + recall)
        else:
            f1 = 0.0
            flags.append(f"class_{c}_f1_undefined")
        per_class.append(
            {"class": c, "precision": precision, "recall": recall, "f1": f1, "support": support}
        )

    tr = 0
    for c in range(n_classes):
        tr += int(C[c, c])
    accuracy = tr / total

    macro = {}
    weighted = {}
    for key in ("precision", "recall", "f1"):
        s = 0.0
        ws = 0.0
        for entry in per_class:
            s += entry[key]
            ws += entry["support"] * entry[key]
        macro[key] = s / n_classes
        weighted[key] = ws / total

    return MetricsReport(
        model=model,
        per_class=per_class,
        accuracy=accuracy,
        macro=macro,
        weighted=weighted,
        flags=flags,
    )


def _midranks(scores: np.ndarray) -> np.ndarray:
    order = np.argsort(scores, kind="stable")
    s = scores[order]
    ranks = np.empty(scores.size)
    i = 0
    n = scores.size
    while i < n:
        j = i
        while j + 1 < n and s[j + 1] == s[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def roc_auc_ovr(y_true, proba, n_classes: int = N_CLASSES) -> dict:
    """One-vs-rest AUC per class from rank statistics with midrank ties.

    Classes absent from y_true (or covering all of it) have undefined AUC;
    they are flagged and excluded from the macro average.
    """
    y_true = np.asarray(y_true, dtype=np.int64)
    proba = np.asarray(proba, dtype=np.float64)
    if proba.ndim != 2 or proba.shape[0] != y_true.size or proba.shape[1] != n_classes:
        raise ValueError("probability matrix shape does not match labels")
    sums = proba.sum(axis=1)
    if np.abs(sums - 1.0).max() > 1e-6:
        raise ValueError("probability rows must sum to 1 within 1e-6")

    per_class = []
    flags = []
    defined = []
    for c in range(n_classes):
        pos = y_true == c
        n_pos = int(pos.sum())
        n_neg = y_true.size - n_pos
        if n_pos == 0 or n_neg == 0:
            per_class.append(None)
            flags.append(f"class_{c}_auc_undefined")
            continue
        ranks = _midranks(proba[:, c])
        auc = (float(ranks[pos].sum()) - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg)
        per_class.append(auc)
        defined.append(auc)
    if not defined:
        raise ValueError("all AUCs undefined: labels contain a single class")
    return {
        "per_class": per_class,
        "macro": sum(defined) / len(defined),
        "flags": flags,
    }


def report_from_json(obj: dict) -> MetricsReport:
    return MetricsReport(
        model=obj["model"],
        per_class=obj["per_class"],
        accuracy=obj["accuracy"],
        macro=obj["macro"],
        weighted=obj["weighted"],
        auc=obj.get("auc"),
        flags=obj.get("flags", []),
    )


REPORT_COLUMNS = ("Precision", "Recall", "F1-Score", "Accuracy", "Macro Avg", "Weighted Avg")


def _report_row(report: MetricsReport, c: int):
    entry = report.per_class[c]
    return (
        entry["precision"],
        entry["recall"],
        entry["f1"],
        report.accuracy,
        report.macro["f1"],
        report.weighted["f1"],
    )


def render_report(reports: list) -> dict:
    """Render per-class tables across models.

    Returns {"json": [...], "text": str, "csv": str}. Each class gets one
    table with a row per model; the aggregate columns repeat per table.
    Text and CSV views round to 2 decimals, JSON keeps full precision.
    """
    if not reports:
        raise ValueError("no reports to render")
    n_classes = len(reports[0].per_class)
    json_part = [r.to_json() for r in reports]

    name_width = max(len("Algorithm"), max(len(r.model) for r in reports))
    lines = []
    csv_lines = ["class,algorithm," + ",".join(c.lower().replace(" ", "_").replace("-", "_") for c in REPORT_COLUMNS)]
    for c in range(n_classes):
        lines.append(f"Performance metrics for class {c}")
        header = "Algorithm".ljust(name_width) + "".join(f"{col:>14}" for col in REPORT_COLUMNS)
        lines.append(header)
        lines.append("-" * len(header))
        for r in reports:
            vals = _report_row(r, c)
            lines.append(r.model.ljust(name_width) + "".join(f"{v:>14.2f}" for v in vals))
            csv_lines.append(f"{c},{r.model}," + ",".join(f"{v:.2f}" for v in vals))
        lines.append("")
    return {"json": json_part, "text": "\n".join(lines), "csv": "\n".join(csv_lines) + "\n"}
