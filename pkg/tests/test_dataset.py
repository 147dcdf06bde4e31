import math

import numpy as np
import pytest

from quakegrade.dataset import (
    Dataset,
    FeatureSchema,
    LabelEncoding,
    correlation_matrix,
    describe_numeric,
    frequency_table,
    from_arrays,
    load_csv,
    load_features_csv,
    stratified_split,
)
from quakegrade.errors import DataError, SchemaError, StratificationError


def _schema(*cols, target="damage_grade"):
    return FeatureSchema(columns=tuple(cols), target=target)


def _write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestSchema:
    def test_duplicate_columns_rejected(self):
        with pytest.raises(SchemaError):
            _schema(("a", "numeric"), ("a", "numeric"))

    def test_target_not_a_feature(self):
        with pytest.raises(SchemaError):
            _schema(("damage_grade", "numeric"))

    def test_unknown_kind_rejected(self):
        with pytest.raises(SchemaError):
            _schema(("a", "weird"))


class TestLoadCsv:
    def test_lexicographic_encoding_of_categoricals(self, tmp_path):
        # raw values {"b","a","b"} encode to (1, 0, 1)
        p = _write(tmp_path, "cat,damage_grade\nb,1\na,2\nb,3\n")
        ds = load_csv(p, _schema(("cat", "categorical")))
        np.testing.assert_array_equal(ds.features[:, 0], [1.0, 0.0, 1.0])

    def test_grades_map_to_contiguous_codes(self, tmp_path):
        p = _write(tmp_path, "x,damage_grade\n1,3\n2,1\n3,2\n")
        ds = load_csv(p, _schema(("x", "numeric")))
        np.testing.assert_array_equal(ds.labels, [2, 0, 1])
        assert ds.encoding.target == {"1": 0, "2": 1, "3": 2}

    def test_encoding_round_trip(self, tmp_path):
        p = _write(tmp_path, "cat,damage_grade\nred,1\ngreen,2\nblue,3\nred,1\n")
        ds = load_csv(p, _schema(("cat", "categorical")))
        for raw, code in ds.encoding.by_column["cat"].items():
            assert ds.encoding.decode_value("cat", code) == raw
        for raw, code in ds.encoding.target.items():
            assert ds.encoding.decode_label(code) == raw

    def test_header_superset_allowed(self, tmp_path):
        p = _write(tmp_path, "extra,x,damage_grade\n9,1,1\n8,2,2\n")
        ds = load_csv(p, _schema(("x", "numeric")))
        assert ds.d == 1
        np.testing.assert_array_equal(ds.features[:, 0], [1.0, 2.0])

    def test_missing_column_names_it(self, tmp_path):
        p = _write(tmp_path, "x,damage_grade\n1,1\n")
        with pytest.raises(SchemaError, match="missing"):
            load_csv(p, _schema(("x", "numeric"), ("y", "numeric")))

    def test_header_only_is_empty_data_section(self, tmp_path):
        p = _write(tmp_path, "x,damage_grade\n")
        with pytest.raises(DataError, match="empty data section"):
            load_csv(p, _schema(("x", "numeric")))

    def test_unparseable_cell_reports_row_and_column(self, tmp_path):
        p = _write(tmp_path, "x,damage_grade\n1,1\nnope,2\n")
        with pytest.raises(DataError, match="row 3.*'x'"):
            load_csv(p, _schema(("x", "numeric")))

    def test_missing_cell_is_hard_error(self, tmp_path):
        p = _write(tmp_path, "x,damage_grade\n,1\n")
        with pytest.raises(DataError):
            load_csv(p, _schema(("x", "numeric")))

    def test_binary_domain_enforced(self, tmp_path):
        p = _write(tmp_path, "b,damage_grade\n2,1\n")
        with pytest.raises(DataError, match="binary"):
            load_csv(p, _schema(("b", "binary")))

    def test_row_order_preserved(self, tmp_path):
        p = _write(tmp_path, "x,damage_grade\n5,1\n3,2\n4,3\n")
        ds = load_csv(p, _schema(("x", "numeric")))
        np.testing.assert_array_equal(ds.features[:, 0], [5.0, 3.0, 4.0])


class TestDatasetInvariants:
    def test_features_immutable(self, blobs_small):
        with pytest.raises(ValueError):
            blobs_small.features[0, 0] = 1.0

    def test_non_finite_rejected(self):
        with pytest.raises(DataError):
            from_arrays(np.array([[np.nan]]), np.array([0]))


class TestStratifiedSplit:
    def test_counts_follow_rounding_rule(self):
        y = np.concatenate([np.zeros(90), np.ones(60), np.full(30, 2)]).astype(int)
        ds = from_arrays(np.arange(180, dtype=float).reshape(-1, 1), y)
        train, test = stratified_split(ds, 0.2, seed=0)
        np.testing.assert_array_equal(np.bincount(test.labels), [18, 12, 6])
        np.testing.assert_array_equal(np.bincount(train.labels), [72, 48, 24])

    def test_two_per_class_half_fraction(self):
        ds = from_arrays(np.arange(6, dtype=float).reshape(-1, 1), [0, 0, 1, 1, 2, 2])
        train, test = stratified_split(ds, 0.5, seed=0)
        np.testing.assert_array_equal(np.bincount(test.labels), [1, 1, 1])

    def test_same_seed_same_partition(self, blobs_small):
        a = stratified_split(blobs_small, 0.25, seed=7)
        b = stratified_split(blobs_small, 0.25, seed=7)
        np.testing.assert_array_equal(a[0].features, b[0].features)
        np.testing.assert_array_equal(a[1].features, b[1].features)

    def test_disjoint_union(self, blobs_small):
        train, test = stratified_split(blobs_small, 0.3, seed=1)
        assert train.n + test.n == blobs_small.n
        all_rows = np.vstack([train.features, test.features])
        assert sorted(map(tuple, all_rows)) == sorted(map(tuple, blobs_small.features))

    def test_small_class_rejected(self):
        ds = from_arrays(np.arange(3, dtype=float).reshape(-1, 1), [0, 0, 1])
        with pytest.raises(StratificationError):
            stratified_split(ds, 0.5, seed=0)

    def test_proportions_within_one_instance(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            counts = rng.integers(5, 50, 3)
            y = np.repeat([0, 1, 2], counts)
            ds = from_arrays(rng.standard_normal((y.size, 2)), y)
            frac = float(rng.uniform(0.1, 0.5))
            _, test = stratified_split(ds, frac, seed=3)
            for c in range(3):
                assert abs((test.labels == c).sum() - counts[c] * frac) <= 1


class TestDescribeNumeric:
    def test_hand_column(self):
        ds = from_arrays(np.array([[1.0], [2.0], [3.0], [4.0]]), [0, 0, 1, 1])
        stats = describe_numeric(ds)["x0"]
        assert stats["mean"] == 2.5
        assert stats["median"] == 2.5

    def test_constant_column(self):
        ds = from_arrays(np.full((5, 1), 7.0), [0, 1, 0, 1, 0])
        stats = describe_numeric(ds)["x0"]
        assert stats["std"] == 0.0
        assert stats["min"] == stats["max"] == stats["mean"] == 7.0

    def test_single_row_flagged(self):
        ds = from_arrays(np.array([[3.0]]), [0])
        stats = describe_numeric(ds)["x0"]
        assert stats["std"] == 0.0
        assert "single_row" in stats["flags"]

    def test_matches_brute_force_on_random_matrices(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            n = int(rng.integers(2, 40))
            col = rng.standard_normal(n)
            ds = from_arrays(col.reshape(-1, 1), rng.integers(0, 3, n))
            stats = describe_numeric(ds)["x0"]
            mean = sum(col) / n
            var = sum((v - mean) ** 2 for v in col) / (n - 1)
            assert stats["mean"] == pytest.approx(mean, rel=1e-12)
            assert stats["std"] == pytest.approx(math.sqrt(var), rel=1e-9)
            assert stats["min"] == min(col)
            assert stats["max"] == max(col)
            # linear-interpolation quartile oracle
            for key, q in (("q25", 0.25), ("median", 0.5), ("q75", 0.75)):
                srt = sorted(col)
                pos = q * (n - 1)
                lo = math.floor(pos)
                hi = math.ceil(pos)
                expect = srt[lo] + (pos - lo) * (srt[hi] - srt[lo])
                assert stats[key] == pytest.approx(expect, rel=1e-12, abs=1e-12)


class TestFrequencyTable:
    def test_binary_all_zero(self):
        schema = _schema(("b", "binary"), target="t")
        ds = Dataset(np.zeros((6, 1)), np.zeros(6, dtype=int), schema)
        assert frequency_table(ds, "b") == (1, 0, 6)

    def test_mode_tie_toward_smallest_code(self):
        schema = _schema(("c", "categorical"), target="t")
        ds = Dataset(np.array([[0.0], [0.0], [1.0], [1.0]]), np.zeros(4, dtype=int), schema)
        assert frequency_table(ds, "c") == (2, 0, 2)

    def test_numeric_column_rejected(self):
        ds = from_arrays(np.zeros((3, 1)), [0, 1, 2])
        with pytest.raises(SchemaError):
            frequency_table(ds, "x0")

    def test_unknown_column_rejected(self, blobs_small):
        with pytest.raises(SchemaError):
            frequency_table(blobs_small, "nope")

    def test_matches_brute_force(self):
        rng = np.random.default_rng(2)
        schema = _schema(("c", "categorical"), target="t")
        for _ in range(100):
            codes = rng.integers(0, 5, int(rng.integers(1, 30)))
            ds = Dataset(codes.reshape(-1, 1).astype(float), np.zeros(codes.size, dtype=int), schema)
            n_unique, mode, freq = frequency_table(ds, "c")
            tally = {}
            for v in codes:
                tally[int(v)] = tally.get(int(v), 0) + 1
            assert n_unique == len(tally)
            best = min(sorted(tally), key=lambda k: (-tally[k], k))
            assert (mode, freq) == (best, tally[best])


class TestCorrelationMatrix:
    def test_self_correlation_is_one(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal(50)
        ds = from_arrays(np.column_stack([x, x * 0.5 + 1]), rng.integers(0, 2, 50))
        res = correlation_matrix(ds)
        assert np.all(np.diag(res.matrix) == 1.0)

    def test_negation_gives_minus_one(self):
        x = np.arange(10, dtype=float)
        ds = from_arrays(np.column_stack([x, -x]), np.zeros(10, dtype=int))
        res = correlation_matrix(ds)
        assert res.matrix[0, 1] == pytest.approx(-1.0, abs=1e-12)

    def test_five_point_hand_dataset(self):
        x = np.array([1.0, 2.0, 3.0, 4.0, 5.0])
        y = np.array([2.0, 1.0, 4.0, 3.0, 5.0])
        ds = from_arrays(np.column_stack([x, y]), np.zeros(5, dtype=int))
        res = correlation_matrix(ds)
        mx, my = x.mean(), y.mean()
        expect = float(np.sum((x - mx) * (y - my)) / math.sqrt(np.sum((x - mx) ** 2) * np.sum((y - my) ** 2)))
        assert res.matrix[0, 1] == pytest.approx(expect, rel=1e-12)

    def test_zero_variance_flagged_not_zeroed(self):
        ds = from_arrays(np.column_stack([np.arange(5.0), np.ones(5)]), np.zeros(5, dtype=int))
        res = correlation_matrix(ds)
        assert "x1" in res.undefined
        assert np.isnan(res.matrix[0, 1])

    def test_symmetry_and_affine_invariance(self):
        rng = np.random.default_rng(4)
        X = rng.standard_normal((40, 3))
        y = rng.integers(0, 3, 40)
        base = correlation_matrix(from_arrays(X, y))
        scaled = X.copy()
        scaled[:, 1] = 3.5 * scaled[:, 1] + 11.0
        res = correlation_matrix(from_arrays(scaled, y))
        np.testing.assert_array_equal(base.matrix, base.matrix.T)
        np.testing.assert_allclose(res.matrix, base.matrix, atol=1e-12)

    def test_requires_two_numeric_columns(self):
        ds = from_arrays(np.zeros((4, 1)), [0, 1, 0, 1])
        with pytest.raises(SchemaError):
            correlation_matrix(ds)


class TestFeatureCsvForPrediction:
    def test_unseen_category_names_row_column_value(self, tmp_path):
        train = _write(tmp_path, "cat,damage_grade\na,1\nb,2\n", name="train.csv")
        ds = load_csv(train, _schema(("cat", "categorical")))
        pred = _write(tmp_path, "cat\na\nz\n", name="pred.csv")
        with pytest.raises(DataError, match="row 3.*'cat'.*'z'"):
            load_features_csv(pred, ds.schema, ds.encoding)

    def test_target_column_optional(self, tmp_path):
        train = _write(tmp_path, "x,damage_grade\n1,1\n2,2\n", name="train.csv")
        ds = load_csv(train, _schema(("x", "numeric")))
        pred = _write(tmp_path, "x\n4\n5\n", name="pred.csv")
        feats = load_features_csv(pred, ds.schema, ds.encoding)
        np.testing.assert_array_equal(feats[:, 0], [4.0, 5.0])
