"""Tests for dataset loading, encoding, synthesis and assignments."""

import numpy as np
import pandas as pd
import pytest

from core.dataset import (
    apply_assignment,
    build_dataset,
    candidate_values,
    generate_synthetic,
    load_csv,
    write_csv,
)
from core.errors import (
    EmptyDataset,
    InvalidSpec,
    MissingColumn,
    TypeMismatch,
    UnknownCategory,
    UnknownFeature,
    ValueOutOfDomain,
)
from core.models import Assignment, FeatureDef, FeatureSchema, SyntheticSpec


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture
def ab_schema():
    return FeatureSchema(
        features=[FeatureDef(name="f", kind="categorical", categories=["a", "b"])],
        labels=["y"],
    )


@pytest.fixture
def numeric_schema():
    return FeatureSchema(
        features=[FeatureDef(name="x", kind="numeric", bounds=(0.0, 10.0))],
        labels=["y"],
    )


class TestSchema:
    def test_categorical_needs_two_values(self):
        with pytest.raises(ValueError):
            FeatureDef(name="f", kind="categorical", categories=["a"])

    def test_numeric_needs_increasing_bounds(self):
        with pytest.raises(ValueError):
            FeatureDef(name="x", kind="numeric", bounds=(1.0, 1.0))

    def test_label_feature_clash_rejected(self):
        with pytest.raises(ValueError):
            FeatureSchema(
                features=[FeatureDef(name="f", kind="categorical", categories=["a", "b"])],
                labels=["f"],
            )

    def test_duplicate_features_rejected(self):
        f = FeatureDef(name="f", kind="categorical", categories=["a", "b"])
        with pytest.raises(ValueError):
            FeatureSchema(features=[f, f], labels=["y"])


class TestLoadCsv:
    def test_one_hot_rows(self, tmp_path, ab_schema):
        """Three rows of a two-category feature encode to rows summing to 1."""
        path = _write(tmp_path / "d.csv", "f,label:y\na,0\nb,1\na,1\n")
        dataset = load_csv(path, ab_schema)
        assert (dataset.m, dataset.p) == (3, 2)
        np.testing.assert_array_equal(dataset.encoded.sum(axis=1), 1.0)
        np.testing.assert_array_equal(dataset.encoded, [[1, 0], [0, 1], [1, 0]])
        np.testing.assert_array_equal(dataset.targets[:, 0], [0, 1, 1])

    def test_unknown_category(self, tmp_path, ab_schema):
        path = _write(tmp_path / "d.csv", "f,label:y\na,0\nc,1\n")
        with pytest.raises(UnknownCategory) as info:
            load_csv(path, ab_schema)
        assert info.value.row == 2
        assert info.value.col == "f"
        assert info.value.code == "dataset.UnknownCategory"

    def test_standardization(self, tmp_path, numeric_schema):
        """(1, 2, 3) standardizes with the population deviation."""
        path = _write(tmp_path / "d.csv", "x,label:y\n1,0\n2,1\n3,0\n")
        dataset = load_csv(path, numeric_schema)
        np.testing.assert_allclose(dataset.encoded[:, 0], [-1.2247, 0.0, 1.2247], atol=1e-4)

    def test_standardized_moments(self, mixed_dataset):
        column = mixed_dataset.encoded[:, mixed_dataset.encoding_for("size").start]
        assert abs(column.mean()) < 1e-9
        assert abs(column.std() - 1.0) < 1e-6

    def test_missing_column(self, tmp_path, ab_schema):
        path = _write(tmp_path / "d.csv", "f\na\n")
        with pytest.raises(MissingColumn):
            load_csv(path, ab_schema)

    def test_type_mismatch_names_row(self, tmp_path, numeric_schema):
        path = _write(tmp_path / "d.csv", "x,label:y\n1,0\nabc,1\n")
        with pytest.raises(TypeMismatch) as info:
            load_csv(path, numeric_schema)
        assert info.value.row == 2

    def test_non_binary_label(self, tmp_path, ab_schema):
        path = _write(tmp_path / "d.csv", "f,label:y\na,2\n")
        with pytest.raises(TypeMismatch):
            load_csv(path, ab_schema)

    def test_out_of_bounds(self, tmp_path, numeric_schema):
        path = _write(tmp_path / "d.csv", "x,label:y\n11,0\n")
        with pytest.raises(ValueOutOfDomain):
            load_csv(path, numeric_schema)

    def test_empty(self, tmp_path, ab_schema):
        path = _write(tmp_path / "d.csv", "f,label:y\n")
        with pytest.raises(EmptyDataset):
            load_csv(path, ab_schema)

    def test_constant_numeric_encodes_to_zero(self, tmp_path, numeric_schema):
        path = _write(tmp_path / "d.csv", "x,label:y\n4,0\n4,1\n")
        dataset = load_csv(path, numeric_schema)
        np.testing.assert_array_equal(dataset.encoded, 0.0)

    def test_round_trip(self, tmp_path, mixed_dataset):
        """write_csv then load_csv reproduces raw cells and targets."""
        path = write_csv(mixed_dataset, tmp_path / "d.csv")
        loaded = load_csv(path, mixed_dataset.schema)
        pd.testing.assert_frame_equal(loaded.raw, mixed_dataset.raw, check_dtype=False)
        np.testing.assert_array_equal(loaded.targets, mixed_dataset.targets)
        np.testing.assert_allclose(loaded.encoded, mixed_dataset.encoded)

    def test_reemit_loaded_csv_byte_for_byte(self, tmp_path):
        schema = FeatureSchema(
            features=[
                FeatureDef(name="x", kind="numeric", bounds=(0.0, 10.0)),
                FeatureDef(name="f", kind="categorical", categories=["a", "b"]),
            ],
            labels=["y"],
        )
        text = "x,f,label:y\n1,a,0\n2.50,b,1\n3,a,0\n"
        dataset = load_csv(_write(tmp_path / "in.csv", text), schema)
        emitted = write_csv(dataset, tmp_path / "out.csv").read_text(encoding="utf-8")
        assert emitted == text

        subset = write_csv(dataset.subset([1]), tmp_path / "one.csv").read_text(encoding="utf-8")
        assert subset == "x,f,label:y\n2.50,b,1\n"

    def test_assigned_dataset_writes_assigned_values(self, tmp_path, mixed_dataset):
        path = write_csv(mixed_dataset, tmp_path / "d.csv")
        loaded = load_csv(path, mixed_dataset.schema)
        fixed = apply_assignment(loaded, Assignment(bindings={"color": "blue"}))
        assert fixed.cells is None
        rewritten = load_csv(write_csv(fixed, tmp_path / "fixed.csv"), mixed_dataset.schema)
        assert set(rewritten.raw["color"]) == {"blue"}


class TestSynthetic:
    def test_planted_lowers_label_rate(self):
        spec = SyntheticSpec(n_features=4, n_values=3, n_labels=3, n_samples=500, planted_size=2)
        dataset, truth = generate_synthetic(spec, seed=7)
        assert len(truth.assignment) == 2

        match = np.ones(dataset.m, dtype=bool)
        for feature, value in truth.assignment.items():
            match &= (dataset.raw[feature] == value).to_numpy()
        assert match.any() and (~match).any()
        for l in range(3):
            assert dataset.targets[match, l].mean() < dataset.targets[~match, l].mean()

    def test_probabilities_within_ranges(self):
        _, truth = generate_synthetic(SyntheticSpec(), seed=3)
        assert all(0.0 <= p <= 0.1 for p in truth.match_probabilities)
        assert all(0.7 <= p <= 1.0 for p in truth.other_probabilities)

    def test_empty_planting_matches_everything(self):
        spec = SyntheticSpec(n_features=3, planted_size=0, n_samples=400)
        dataset, truth = generate_synthetic(spec, seed=1)
        assert truth.assignment == {}
        assert np.all(dataset.targets.mean(axis=0) < 0.2)

    def test_same_seed_identical(self):
        spec = SyntheticSpec(n_numeric=2)
        a, ta = generate_synthetic(spec, seed=11)
        b, tb = generate_synthetic(spec, seed=11)
        pd.testing.assert_frame_equal(a.raw, b.raw)
        np.testing.assert_array_equal(a.targets, b.targets)
        assert ta == tb

    def test_seeds_differ(self):
        a, _ = generate_synthetic(SyntheticSpec(), seed=7)
        b, _ = generate_synthetic(SyntheticSpec(), seed=8)
        assert not a.raw.equals(b.raw)

    def test_explicit_planting(self):
        spec = SyntheticSpec(n_features=3, planted={"f2": "v1"})
        _, truth = generate_synthetic(spec, seed=0)
        assert truth.assignment == {"f2": "v1"}

    def test_invalid_specs(self):
        with pytest.raises(InvalidSpec):
            generate_synthetic(SyntheticSpec(n_features=2, planted_size=3), seed=0)
        with pytest.raises(InvalidSpec):
            generate_synthetic(SyntheticSpec(n_samples=5), seed=0)
        with pytest.raises(InvalidSpec):
            generate_synthetic(SyntheticSpec(n_features=2, planted={"f9": "v0"}), seed=0)


class TestCandidateValues:
    def test_declaration_order(self):
        schema = FeatureSchema(
            features=[FeatureDef(name="f", kind="categorical", categories=["yes", "no"])],
            labels=["y"],
        )
        raw = pd.DataFrame({"f": pd.Series(["no", "yes"], dtype=object)})
        dataset = build_dataset(schema, raw, np.zeros((2, 1)))
        assert candidate_values(dataset)[0].candidates == ["yes", "no"]

    def test_numeric_quantiles(self):
        schema = FeatureSchema(
            features=[FeatureDef(name="x", kind="numeric", bounds=(0.0, 101.0))], labels=["y"]
        )
        raw = pd.DataFrame({"x": np.arange(1, 101, dtype=float)})
        dataset = build_dataset(schema, raw, np.zeros((100, 1)))
        grid = candidate_values(dataset, grid_size=5)[0].candidates
        np.testing.assert_allclose(grid, [1.0, 25.75, 50.5, 75.25, 100.0], atol=0.5)
        assert all(a < b for a, b in zip(grid, grid[1:]))

    def test_constant_column(self):
        schema = FeatureSchema(
            features=[FeatureDef(name="x", kind="numeric", bounds=(0.0, 100.0))], labels=["y"]
        )
        raw = pd.DataFrame({"x": np.full(6, 42.0)})
        dataset = build_dataset(schema, raw, np.zeros((6, 1)))
        assert candidate_values(dataset)[0].candidates == [42.0]

    def test_grid_size_floor(self, mixed_dataset):
        with pytest.raises(ValueError):
            candidate_values(mixed_dataset, grid_size=1)


class TestApplyAssignment:
    def test_empty_is_identity(self, mixed_dataset):
        fixed = apply_assignment(mixed_dataset, Assignment())
        np.testing.assert_array_equal(fixed.encoded, mixed_dataset.encoded)

    def test_categorical_slice(self, mixed_dataset):
        fixed = apply_assignment(mixed_dataset, Assignment(bindings={"shape": "b"}))
        s = mixed_dataset.encoding_for("shape")
        np.testing.assert_array_equal(fixed.encoded[:, s.start:s.stop], np.tile([0.0, 1.0], (mixed_dataset.m, 1)))
        # other columns untouched
        np.testing.assert_array_equal(fixed.encoded[:, :s.start], mixed_dataset.encoded[:, :s.start])

    def test_numeric_uses_original_encoding(self, mixed_dataset):
        s = mixed_dataset.encoding_for("size")
        fixed = apply_assignment(mixed_dataset, Assignment(bindings={"size": 3.0}))
        np.testing.assert_allclose(fixed.encoded[:, s.start], (3.0 - s.mean) / s.std)

    def test_idempotent(self, mixed_dataset):
        a = Assignment(bindings={"color": "green", "size": 7.5})
        once = apply_assignment(mixed_dataset, a)
        twice = apply_assignment(once, a)
        np.testing.assert_array_equal(once.encoded, twice.encoded)

    def test_full_assignment_identical_rows(self, mixed_dataset):
        a = Assignment(bindings={"color": "red", "size": 1.0, "shape": "a"})
        fixed = apply_assignment(mixed_dataset, a)
        np.testing.assert_array_equal(fixed.encoded, np.tile(fixed.encoded[0], (mixed_dataset.m, 1)))

    def test_errors(self, mixed_dataset):
        with pytest.raises(UnknownFeature):
            apply_assignment(mixed_dataset, Assignment(bindings={"weight": 1.0}))
        with pytest.raises(ValueOutOfDomain):
            apply_assignment(mixed_dataset, Assignment(bindings={"color": "purple"}))
        with pytest.raises(ValueOutOfDomain):
            apply_assignment(mixed_dataset, Assignment(bindings={"size": 12.0}))

    def test_extend_rejects_rebinding(self):
        with pytest.raises(ValueError):
            Assignment(bindings={"f": "a"}).extend("f", "b")
