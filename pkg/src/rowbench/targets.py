"""Prediction-target selection, quartile discretization, target-masked examples.

Each table yields one target column. Continuous targets are binned into four
quartile buckets rendered as natural-language class descriptors; every row is
then serialized with the target column removed so the label has to be inferred
from the remaining features.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import TargetError
from .tables import (
    KIND_NUMBER,
    KIND_TEXT,
    KIND_TIMESTAMP,
    Table,
    normalize_value,
    serialize_row,
)
from .util import format_number, rng_for

logger = logging.getLogger(__name__)

CATEGORICAL = "categorical"
DISCRETIZED_NUMERIC = "discretized_numeric"

MIN_UNIQUE = 2
MAX_UNIQUE = 50
MAX_RENDERED_LENGTH = 256
MIN_DISCRETIZE_VALUES = 8
DEFAULT_CATEGORICAL_PROBABILITY = 0.5


@dataclass(frozen=True)
class TargetSpec:
    column: str
    kind: str  # CATEGORICAL or DISCRETIZED_NUMERIC
    descriptors: tuple[str, ...]
    boundaries: tuple[float, float, float] | None = None

    def __post_init__(self):
        if not self.descriptors:
            raise TargetError("descriptors must be non-empty")
        if len(set(self.descriptors)) != len(self.descriptors):
            raise TargetError("descriptors must be pairwise distinct")
        if self.kind == DISCRETIZED_NUMERIC:
            if self.boundaries is None or len(self.descriptors) != 4:
                raise TargetError("discretized target needs 3 boundaries and 4 descriptors")
            q1, q2, q3 = self.boundaries
            if not (q1 < q2 < q3):
                raise TargetError("boundaries must be strictly ascending")
        elif self.boundaries is not None:
            raise TargetError("categorical target must not carry boundaries")

    def bucket_label(self, value: float) -> str:
        """Half-open buckets [q_i, q_{i+1}); the top bucket is closed above."""
        q1, q2, q3 = self.boundaries
        if value < q1:
            return self.descriptors[0]
        if value < q2:
            return self.descriptors[1]
        if value < q3:
            return self.descriptors[2]
        return self.descriptors[3]


@dataclass(frozen=True)
class LabeledExample:
    text: str
    label: str
    dataset_id: str
    doc_id: str


def candidate_targets(table: Table) -> set[str]:
    """Columns usable as prediction targets after the rejection rules."""
    if not table.rows:
        raise TargetError(f"dataset {table.dataset_id!r} is empty")
    candidates: set[str] = set()
    n_rows = len(table.rows)
    for j, col in enumerate(table.columns):
        if "Unnamed:" in col.name:
            continue
        if col.kind == KIND_TIMESTAMP:
            continue
        if col.unique_count < MIN_UNIQUE or col.unique_count > MAX_UNIQUE:
            continue
        longest = max(
            (len(normalize_value(row[j])) for row in table.rows if not row[j].is_missing()),
            default=0,
        )
        if longest > MAX_RENDERED_LENGTH:
            continue
        if col.kind != KIND_NUMBER and col.unique_count == n_rows:
            continue
        candidates.add(col.name)
    if not candidates:
        raise TargetError(f"dataset {table.dataset_id!r}: no usable target column")
    return candidates


def discretize(values: Sequence[float]) -> tuple[tuple[float, float, float], tuple[str, ...]]:
    """Quartile boundaries plus the four natural-language bucket descriptors.

    Quartiles use linear interpolation at index (n-1)*p over the sorted
    sample. Coincident quartiles mean the column cannot support four classes.
    """
    data = np.asarray(values, dtype=float)
    if data.size < MIN_DISCRETIZE_VALUES:
        raise TargetError(f"need at least {MIN_DISCRETIZE_VALUES} values to discretize")
    if np.all(data == data[0]):
        raise TargetError("all values equal, nothing to discretize")
    q1, q2, q3 = (float(q) for q in np.quantile(data, [0.25, 0.5, 0.75]))
    if not (q1 < q2 < q3):
        raise TargetError(f"coincident quartiles ({q1}, {q2}, {q3})")
    s1, s2, s3 = format_number(q1), format_number(q2), format_number(q3)
    descriptors = (
        f"less than {s1}",
        f"between {s1} and {s2}",
        f"between {s2} and {s3}",
        f"greater than {s3}",
    )
    return (q1, q2, q3), descriptors


def choose_target(
    candidates: set[str],
    table: Table,
    p: float = DEFAULT_CATEGORICAL_PROBABILITY,
    seed: int = 0,
) -> TargetSpec:
    """Pick one target column, preferring the categorical pool with probability p.

    Numeric picks are discretized into quartile buckets. Draws are made over
    the sorted candidate list so the choice is a pure function of the seed.
    """
    if not candidates:
        raise TargetError("empty candidate set")
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must be a probability")
    kind_by_name = {c.name: c.kind for c in table.columns}
    numeric = sorted(n for n in candidates if kind_by_name[n] == KIND_NUMBER)
    categorical = sorted(n for n in candidates if kind_by_name[n] == KIND_TEXT)
    if not numeric and not categorical:
        raise TargetError("candidates contain no numeric or categorical column")

    rng = rng_for(seed, "target", table.dataset_id)
    if numeric and categorical:
        pool = categorical if rng.random() < p else numeric
    else:
        pool = categorical or numeric
    column = pool[int(rng.integers(len(pool)))]

    if kind_by_name[column] == KIND_NUMBER:
        j = table.column_index(column)
        values = [row[j].number for row in table.rows if not row[j].is_missing()]
        boundaries, descriptors = discretize(values)
        return TargetSpec(column=column, kind=DISCRETIZED_NUMERIC, descriptors=descriptors, boundaries=boundaries)
    j = table.column_index(column)
    labels = sorted({normalize_value(row[j]) for row in table.rows if not row[j].is_missing()})
    return TargetSpec(column=column, kind=CATEGORICAL, descriptors=tuple(labels))


def make_labeled_examples(table: Table, target: TargetSpec) -> list[LabeledExample]:
    """Serialize each row with the target column masked out; label it.

    Rows whose target value is missing are skipped: "unknown" is a feature
    rendering, not a class.
    """
    j = table.column_index(target.column)
    examples: list[LabeledExample] = []
    excluded = frozenset({target.column})
    for i, row in enumerate(table.rows):
        cell = row[j]
        if cell.is_missing():
            continue
        if target.kind == DISCRETIZED_NUMERIC:
            label = target.bucket_label(cell.number)
        else:
            label = normalize_value(cell)
        examples.append(
            LabeledExample(
                text=serialize_row(row, table, excluded),
                label=label,
                dataset_id=table.dataset_id,
                doc_id=f"{table.dataset_id}:{i}:masked",
            )
        )
    if not examples:
        raise TargetError(
            f"dataset {table.dataset_id!r}: every row is missing target {target.column!r}"
        )
    return examples
