import json

import numpy as np
import pytest

from quakegrade import synth

TOY_SCHEMA = {
    "columns": [
        {"name": "age", "kind": "numeric"},
        {"name": "area", "kind": "numeric"},
        {"name": "height", "kind": "numeric"},
        {"name": "material", "kind": "categorical"},
        {"name": "is_shared", "kind": "binary"},
    ],
    "target": "damage_grade",
}


def write_toy_csv(path, n=120, seed=0):
    rng = np.random.default_rng(seed)
    rows = ["age,area,height,material,is_shared,damage_grade"]
    for _ in range(n):
        grade = int(rng.integers(1, 4))
        age = float(rng.integers(5, 60)) + 10 * grade
        area = float(rng.integers(2, 30))
        height = float(rng.integers(1, 10)) + grade
        material = ["brick", "stone", "wood"][rng.integers(0, 3)]
        shared = int(rng.integers(0, 2))
        rows.append(f"{age},{area},{height},{material},{shared},{grade}")
    path.write_text("\n".join(rows) + "\n")
    return path


@pytest.fixture
def toy_csv(tmp_path):
    return write_toy_csv(tmp_path / "toy.csv")


@pytest.fixture
def toy_config(tmp_path, toy_csv):
    config = {
        "dataset": {"path": str(toy_csv), "schema": TOY_SCHEMA},
        "protocol": "leakage_safe",
        "anomaly": {"enabled": True, "n_trees": 20, "subsample": 64, "contamination": 0.02},
        "resample": {"enabled": True, "strategy": "median", "smote_k": 3},
        "selector": {"enabled": True, "k": 4},
        "models": [
            {"name": "Decision Tree", "kind": "decision_tree", "params": {"max_depth": 6}},
            {"name": "GBM", "kind": "gbm", "params": {"n_rounds": 10}},
        ],
        "tuning": {
            "model": "decision_tree",
            "method": "grid",
            "grid": {"max_depth": [1, 4]},
            "cv_k": 3,
        },
        "out_dir": str(tmp_path / "out"),
        "seed": 9,
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return path


@pytest.fixture
def blobs_small():
    return synth.gaussian_blobs((60, 60, 60), d=5, seed=1)


@pytest.fixture
def blobs_imbalanced():
    return synth.gaussian_blobs((80, 40, 20), d=6, seed=3)
