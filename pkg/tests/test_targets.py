import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rowbench.errors import TargetError
from rowbench.tables import infer_schema
from rowbench.targets import (
    TargetSpec,
    candidate_targets,
    choose_target,
    discretize,
    make_labeled_examples,
)


def make_table(header, rows, dataset_id="t"):
    return infer_schema([header] + rows, dataset_id=dataset_id)


def quartile_oracle(values, p):
    """Independent oracle: sort plus linear interpolation at (n-1)*p."""
    data = sorted(values)
    h = (len(data) - 1) * p
    lo = int(np.floor(h))
    hi = int(np.ceil(h))
    return data[lo] + (h - lo) * (data[hi] - data[lo])


class TestCandidateTargets:
    def test_constant_column_rejected(self):
        t = make_table(["c", "ok"], [["same", str(i % 3)] for i in range(9)])
        assert "c" not in candidate_targets(t)

    def test_high_cardinality_rejected(self):
        rows = [[f"v{i}", str(i % 3)] for i in range(60)]
        t = make_table(["wide", "ok"], rows)
        assert "wide" not in candidate_targets(t)

    def test_unnamed_rejected(self):
        rows = [[str(i), str(i % 3)] for i in range(9)]
        t = make_table(["Unnamed: 0", "ok"], rows)
        assert "Unnamed: 0" not in candidate_targets(t)

    def test_timestamp_rejected(self):
        rows = [[f"2024-01-{i+1:02d}", str(i % 3)] for i in range(9)]
        t = make_table(["when", "ok"], rows)
        assert "when" not in candidate_targets(t)

    def test_long_values_rejected(self):
        rows = [["x" * 300 if i % 2 else "y" * 300, str(i % 3)] for i in range(9)]
        t = make_table(["long", "ok"], rows)
        assert "long" not in candidate_targets(t)

    def test_per_row_unique_text_rejected_but_numeric_kept(self):
        rows = [[f"id{i}", str(i), str(i % 3)] for i in range(20)]
        t = make_table(["textid", "numid", "ok"], rows)
        candidates = candidate_targets(t)
        assert "textid" not in candidates
        assert "numid" in candidates  # numeric, 20 uniques, within bounds

    def test_empty_candidates_error(self):
        t = make_table(["only"], [["same"] for _ in range(5)])
        with pytest.raises(TargetError):
            candidate_targets(t)


class TestDiscretize:
    def test_oracle_values_one_to_eight(self):
        boundaries, descriptors = discretize(list(range(1, 9)))
        assert boundaries == (2.75, 4.5, 6.25)
        assert descriptors[0] == "less than 2.75"
        assert descriptors[1] == "between 2.75 and 4.5"
        assert descriptors[3] == "greater than 6.25"

    def test_matches_independent_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(25):
            values = rng.uniform(-100, 100, int(rng.integers(8, 60))).tolist()
            try:
                boundaries, _ = discretize(values)
            except TargetError:
                continue
            expected = tuple(quartile_oracle(values, p) for p in (0.25, 0.5, 0.75))
            assert boundaries == pytest.approx(expected, abs=1e-12)

    def test_descriptor_number_rendering(self):
        boundaries, descriptors = discretize([15.5, 15.5, 20, 25, 30, 35, 40.2, 40.2, 50, 60])
        assert all("." not in d or not d.endswith("0") for d in descriptors)

    def test_constant_errors(self):
        with pytest.raises(TargetError):
            discretize([3.0] * 10)

    def test_too_few_errors(self):
        with pytest.raises(TargetError):
            discretize([1, 2, 3])

    def test_coincident_quartiles_error(self):
        with pytest.raises(TargetError):
            discretize([1.0] * 9 + [100.0])

    @given(st.sets(st.integers(min_value=-10_000, max_value=10_000), min_size=8, max_size=64))
    @settings(max_examples=60, deadline=None)
    def test_bucket_balance_on_distinct_samples(self, values):
        values = sorted(values)
        try:
            boundaries, descriptors = discretize(values)
        except TargetError:
            return
        spec = TargetSpec(
            column="v", kind="discretized_numeric", descriptors=descriptors, boundaries=boundaries
        )
        counts = {d: 0 for d in descriptors}
        for v in values:
            counts[spec.bucket_label(v)] += 1
        ceiling = int(np.ceil(len(values) / 4))
        assert all(abs(c - ceiling) <= 1 for c in counts.values())

    def test_bucket_assignment_half_open(self):
        _, descriptors = discretize(list(range(1, 9)))
        spec = TargetSpec(
            column="v",
            kind="discretized_numeric",
            descriptors=descriptors,
            boundaries=(2.75, 4.5, 6.25),
        )
        assert spec.bucket_label(2.74) == descriptors[0]
        assert spec.bucket_label(2.75) == descriptors[1]
        assert spec.bucket_label(3.0) == descriptors[1]
        assert spec.bucket_label(6.25) == descriptors[3]
        assert spec.bucket_label(99.0) == descriptors[3]


class TestChooseTarget:
    def _table(self):
        rows = [[str(i % 10), f"c{i % 3}", str(i % 4)] for i in range(40)]
        return make_table(["num", "cat", "num2"], rows, dataset_id="pick")

    def test_deterministic(self):
        t = self._table()
        candidates = candidate_targets(t)
        a = choose_target(candidates, t, seed=5)
        b = choose_target(candidates, t, seed=5)
        assert a == b

    def test_only_numeric_pool(self):
        rows = [[str(i % 9)] for i in range(40)]
        t = make_table(["num"], rows)
        spec = choose_target(candidate_targets(t), t, p=1.0, seed=0)
        assert spec.kind == "discretized_numeric"

    def test_probability_extremes(self):
        t = self._table()
        candidates = candidate_targets(t)
        always_cat = choose_target(candidates, t, p=1.0, seed=3)
        assert always_cat.kind == "categorical"
        never_cat = choose_target(candidates, t, p=0.0, seed=3)
        assert never_cat.kind == "discretized_numeric"

    def test_empty_candidates_error(self):
        t = self._table()
        with pytest.raises(TargetError):
            choose_target(set(), t, seed=0)


class TestMakeLabeledExamples:
    def test_masking_and_labels(self):
        rows = [["setosa", "1.1"], ["virginica", "2.2"], ["", "3.3"]]
        t = make_table(["species", "width"], rows, dataset_id="iris")
        spec = TargetSpec(column="species", kind="categorical", descriptors=("setosa", "virginica"))
        examples = make_labeled_examples(t, spec)
        assert len(examples) == 2  # missing target skipped
        assert examples[0].label == "setosa"
        for example in examples:
            assert "The species is" not in example.text
            assert "The width is" in example.text

    def test_numeric_bucket_label(self):
        rows = [[str(v), "ctx"] for v in range(1, 9)]
        t = make_table(["y", "ctx"], rows)
        boundaries, descriptors = discretize([float(v) for v in range(1, 9)])
        spec = TargetSpec(
            column="y", kind="discretized_numeric", descriptors=descriptors, boundaries=boundaries
        )
        examples = make_labeled_examples(t, spec)
        assert examples[2].label == "between 2.75 and 4.5"  # y = 3

    def test_all_missing_errors(self):
        t = make_table(["y", "x"], [["", "1"], ["NaN", "2"]])
        spec = TargetSpec(column="y", kind="categorical", descriptors=("a",))
        with pytest.raises(TargetError):
            make_labeled_examples(t, spec)

    def test_masking_invariant_on_fixture(self, bench):
        for table in bench["tables"][:3]:
            spec = choose_target(candidate_targets(table), table, seed=42)
            for example in make_labeled_examples(table, spec)[:50]:
                assert f"The {spec.column} is" not in example.text
