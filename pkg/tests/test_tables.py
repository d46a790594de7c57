import re
from datetime import datetime
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rowbench.errors import CorpusError, SchemaError, SerializationError
from rowbench.tables import (
    CellValue,
    build_corpus,
    infer_schema,
    normalize_value,
    parse_number,
    parse_timestamp,
    read_corpus,
    read_delimited,
    read_tables,
    serialize_row,
    write_corpus,
    write_tables,
)

DATA = Path(__file__).parent / "data"

CLAUSE_GRAMMAR = re.compile(r"^(The .+? is .*?\. )*The .+? is .*?\.$")


def make_table(header, rows, dataset_id="t"):
    return infer_schema([header] + rows, dataset_id=dataset_id)


class TestInferSchema:
    def test_numeric_column(self):
        t = make_table(["a"], [["1"], ["2"], ["3"]])
        assert t.columns[0].kind == "number"

    def test_mixed_column_falls_back_to_text(self):
        t = make_table(["a"], [["1"], ["a"]])
        assert t.columns[0].kind == "text"

    def test_timestamp_column(self):
        t = make_table(["a"], [["2025-03-01"], ["2024-01-15"]])
        assert t.columns[0].kind == "timestamp"

    def test_number_beats_timestamp(self):
        # bare years parse as numbers, and number has priority
        t = make_table(["a"], [["2024"], ["2025"]])
        assert t.columns[0].kind == "number"

    def test_missing_tokens(self):
        t = make_table(["a"], [[""], ["NaN"], ["nan"], ["null"], ["NULL"], ["None"], ["7"]])
        cells = [row[0] for row in t.rows]
        assert [c.is_missing() for c in cells] == [True] * 6 + [False]
        assert t.columns[0].kind == "number"

    def test_ragged_rows_error_names_row(self):
        with pytest.raises(SchemaError, match="row 1"):
            make_table(["a", "b"], [["1", "2"], ["only one"]])

    def test_duplicate_headers(self):
        with pytest.raises(SchemaError, match="duplicate"):
            make_table(["a", "a"], [["1", "2"]])

    def test_empty_header_name(self):
        with pytest.raises(SchemaError):
            make_table(["a", " "], [["1", "2"]])

    def test_unique_count_excludes_missing(self):
        t = make_table(["a"], [["1"], ["1"], ["2"], [""]])
        assert t.columns[0].unique_count == 2


class TestNormalizeValue:
    def test_rounding(self):
        assert normalize_value(CellValue.of_number(3.14159)) == "3.14"

    def test_missing(self):
        assert normalize_value(CellValue.missing()) == "unknown"

    def test_timestamp_iso_with_seconds(self):
        cell = CellValue.of_timestamp(datetime(2025, 3, 1))
        assert normalize_value(cell) == "2025-03-01T00:00:00"

    def test_integral_renders_without_decimal_point(self):
        assert normalize_value(CellValue.of_number(5.0)) == "5"

    def test_half_away_from_zero(self):
        assert normalize_value(CellValue.of_number(2.675)) == "2.68"
        assert normalize_value(CellValue.of_number(-2.675)) == "-2.68"

    def test_negative_zero_collapses(self):
        assert normalize_value(CellValue.of_number(-0.001)) == "0"

    def test_text_trim_and_trailing_periods(self):
        assert normalize_value(CellValue.of_text("  Done.  ")) == "Done"
        assert normalize_value(CellValue.of_text("Dr. Who.")) == "Dr. Who"

    def test_precision_zero(self):
        assert normalize_value(CellValue.of_number(2.5), precision=0) == "3"

    @given(st.floats(min_value=-1e6, max_value=1e6, allow_nan=False))
    @settings(max_examples=60, deadline=None)
    def test_idempotent_on_numbers(self, value):
        rendered = normalize_value(CellValue.of_number(value))
        reparsed = parse_number(rendered)
        assert reparsed is not None
        assert normalize_value(CellValue.of_number(reparsed)) == rendered

    @given(st.datetimes(min_value=datetime(1900, 1, 1), max_value=datetime(2100, 1, 1)))
    @settings(max_examples=40, deadline=None)
    def test_idempotent_on_timestamps(self, value):
        rendered = normalize_value(CellValue.of_timestamp(value))
        reparsed = parse_timestamp(rendered)
        assert reparsed is not None
        assert normalize_value(CellValue.of_timestamp(reparsed)) == rendered


class TestSerializeRow:
    def test_basic_template(self):
        t = make_table(["Status", "Price"], [["Active", "50.25"]])
        assert serialize_row(t.rows[0], t) == "The Status is Active. The Price is 50.25."

    def test_exclusion(self):
        t = make_table(["Status", "Price"], [["Active", "50.25"]])
        assert serialize_row(t.rows[0], t, {"Price"}) == "The Status is Active."

    def test_trailing_period_value(self):
        t = make_table(["Note"], [["Done."]])
        assert serialize_row(t.rows[0], t) == "The Note is Done."

    def test_all_excluded_errors(self):
        t = make_table(["A"], [["x"]])
        with pytest.raises(SerializationError):
            serialize_row(t.rows[0], t, {"A"})

    def test_unknown_exclusion_errors(self):
        t = make_table(["A"], [["x"]])
        with pytest.raises(KeyError):
            serialize_row(t.rows[0], t, {"B"})


def test_golden_serialization_matches_byte_for_byte():
    records = read_delimited(DATA / "golden_rows.csv")
    table = infer_schema(records, dataset_id="golden")
    expected = (DATA / "golden_serialized.txt").read_text(encoding="utf-8")
    produced = "".join(serialize_row(row, table) + "\n" for row in table.rows)
    assert produced == expected


class TestBuildCorpus:
    def test_cap_applies_per_dataset(self):
        t = make_table(["a"], [[str(i)] for i in range(40)], dataset_id="big")
        corpus = build_corpus([t], cap=10, seed=1)
        assert corpus.per_dataset_counts["big"] == 10
        assert len(corpus) == 10

    def test_below_cap_keeps_everything(self):
        tables = [
            make_table(["a"], [["1"], ["2"], ["3"]], dataset_id="x"),
            make_table(["b"], [["4"], ["5"], ["6"]], dataset_id="y"),
        ]
        corpus = build_corpus(tables, cap=10_000, seed=0)
        assert len(corpus) == 6

    def test_empty_table_contributes_nothing(self, caplog):
        tables = [
            make_table(["a"], [["1"]], dataset_id="full"),
            make_table(["a"], [], dataset_id="empty"),
        ]
        with caplog.at_level("WARNING"):
            corpus = build_corpus(tables, seed=0)
        assert corpus.per_dataset_counts == {"full": 1, "empty": 0}
        assert "empty" in caplog.text

    def test_zero_documents_error(self):
        t = make_table(["a"], [["one two three"]], dataset_id="long")
        with pytest.raises(CorpusError):
            build_corpus([t], max_words=2, seed=0)

    def test_max_words_filter(self):
        t = make_table(["a"], [["short"], ["lots of words here definitely"]], dataset_id="w")
        corpus = build_corpus([t], max_words=5, seed=0)
        assert len(corpus) == 1

    def test_deterministic_given_seed(self):
        t = make_table(["a"], [[str(i)] for i in range(50)], dataset_id="d")
        c1 = build_corpus([t], cap=7, seed=9)
        c2 = build_corpus([t], cap=7, seed=9)
        assert [d.doc_id for d in c1.documents] == [d.doc_id for d in c2.documents]
        c3 = build_corpus([t], cap=7, seed=10)
        assert [d.doc_id for d in c1.documents] != [d.doc_id for d in c3.documents]

    def test_serialization_grammar(self, bench):
        for doc in bench["corpus"].documents[::251]:
            assert CLAUSE_GRAMMAR.match(doc.text), doc.text

    def test_cap_invariant(self, bench):
        corpus = bench["corpus"]
        assert all(v <= corpus.cap for v in corpus.per_dataset_counts.values())


def test_corpus_file_round_trip(tmp_path):
    t = make_table(["Status", "Price"], [["Active", "50.25"], ["Closed", "10"]], dataset_id="rt")
    corpus = build_corpus([t], seed=0)
    path = tmp_path / "corpus.jsonl"
    write_corpus(path, corpus, {"rt": t}, header={"artifact": "corpus"})
    loaded = read_corpus(path)
    assert [d.doc_id for d in loaded.documents] == [d.doc_id for d in corpus.documents]
    assert [d.text for d in loaded.documents] == [d.text for d in corpus.documents]
    first = path.read_text().splitlines()[0]
    assert '"_meta"' in first


def test_tables_file_round_trip(tmp_path):
    records = read_delimited(DATA / "golden_rows.csv")
    table = infer_schema(records, dataset_id="golden")
    path = tmp_path / "tables.jsonl"
    write_tables(path, [table])
    loaded = read_tables(path)
    assert loaded[0] == table
