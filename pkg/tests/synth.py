"""Deterministic synthetic tables for the test suite.

Ten themed datasets, 15 columns x 500 rows each: one "Unnamed: 0" id column,
seven quantized numeric columns at varied scales, five low-cardinality
categorical columns, one higher-cardinality categorical column and one date
column. Rows come in twin pairs (the second row of each pair resamples one to
three columns of the first) so near-duplicate distractors exist, a shared
latent factor couples the first few numeric and categorical columns so chosen
targets are predictable from the remaining features, and a few columns carry
sporadic missing values.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from rowbench.tables import Table, infer_schema

FIXTURE_SEED = 4217
ROWS_PER_TABLE = 500

# per theme: 7 numeric names, 5 categorical names, city-like name, date name
_THEMES = {
    "orders": ["price", "quantity", "discount", "revenue", "rating", "weight", "stock",
               "status", "region", "channel", "segment", "carrier", "city", "orderdate"],
    "sensors": ["voltage", "current", "pressure", "humidity", "drift", "gain", "offset",
                "mode", "site", "vendor", "housing", "alarm", "zone", "calibrated"],
    "staff": ["salary", "bonus", "tenure", "absences", "training", "overtime", "commute",
              "department", "role", "shift", "contract", "grade", "office", "hiredate"],
    "loans": ["principal", "interest", "installment", "arrears", "term", "score", "ratio",
              "purpose", "product", "collateral", "bureau", "owner", "branch", "issued"],
    "trips": ["fare", "distance", "duration", "tolls", "surge", "tip", "passengers",
              "payment", "fleet", "company", "weekday", "luggage", "destination", "pickup"],
    "crops": ["acreage", "rainfall", "fertilizer", "pesticide", "moisture", "sunlight", "density",
              "variety", "soil", "irrigation", "county", "harvest", "farm", "planted"],
    "games": ["points", "coins", "deaths", "combo", "mana", "health", "speed",
              "hero", "realm", "guild", "difficulty", "squad", "arena", "released"],
    "clinic": ["dosage", "visits", "cholesterol", "bmi", "pulse", "glucose", "copay",
               "diagnosis", "insurer", "ward", "gender", "smoker", "facility", "admitted"],
    "energy": ["output", "efficiency", "emissions", "capacity", "frequency", "losses", "reserve",
               "fuel", "operator", "turbine", "market", "gridzone", "plant", "commissioned"],
    "shipping": ["tonnage", "draft", "containers", "delay", "fees", "transit", "berth",
                 "flag", "port", "line", "customs", "crane", "harbor", "departed"],
}

_VALUE_WORDS = [
    "Amber", "Basalt", "Cobalt", "Drift", "Ember", "Falcon", "Garnet", "Harbor",
    "Indigo", "Juniper", "Krypton", "Lagoon", "Meadow", "Nimbus", "Onyx", "Prairie",
    "Quartz", "Raven", "Sable", "Tundra", "Umber", "Velvet", "Willow", "Zephyr",
    "Aspen", "Birch", "Cedar", "Dahlia", "Elm", "Fern", "Hazel", "Iris",
    "Jade", "Kelp", "Lotus", "Maple", "Nettle", "Oak", "Pine", "Rowan",
]

_CITY_WORDS = [
    "Arlington", "Bristol", "Calgary", "Dresden", "Exeter", "Fresno", "Geneva",
    "Hobart", "Istanbul", "Jakarta", "Kyoto", "Lisbon", "Madrid", "Nairobi",
    "Oslo", "Porto", "Quito", "Riga", "Seville", "Tampere", "Utrecht", "Verona",
    "Windsor", "Xalapa", "Yerevan",
]

_LEVEL_TRIPLES = [
    ["premium", "standard", "basic"],
    ["critical", "elevated", "nominal"],
    ["senior", "mid", "junior"],
    ["secured", "floating", "subprime"],
    ["express", "regular", "economy"],
    ["irrigated", "rainfed", "fallow"],
    ["ranked", "casual", "rookie"],
    ["acute", "chronic", "routine"],
    ["peak", "shoulder", "offpeak"],
    ["priority", "scheduled", "deferred"],
]

_NUMERIC_SCALES = [
    (5.0, 480.0, 0),
    (0.5, 30.0, 1),
    (100.0, 9000.0, 0),
    (0.25, 19.5, 2),
    (-40.0, 40.0, 0),
    (10.0, 999.0, 0),
    (1.0, 60.0, 0),
]


def _numeric_pool(rng: np.random.Generator, low: float, high: float, decimals: int) -> np.ndarray:
    size = int(rng.integers(22, 40))
    base = np.linspace(low, high, size)
    jitter = rng.uniform(-0.5, 0.5, size) * (high - low) / size
    pool = np.unique(np.round(base + jitter, decimals))
    return pool


def _format_number(value: float, decimals: int) -> str:
    if decimals == 0:
        return str(int(round(value)))
    return f"{value:.{decimals}f}"


def make_fixture_csv_rows(theme: str, index: int, seed: int = FIXTURE_SEED) -> list[list[str]]:
    """String records (header first) for one synthetic dataset."""
    rng = np.random.default_rng([seed, index])
    names = _THEMES[theme]
    numeric_names = names[:7]
    cat_names = names[7:12]
    city_name = names[12]
    date_name = names[13]
    header = ["Unnamed: 0"] + numeric_names + cat_names + [city_name, date_name]
    half = ROWS_PER_TABLE // 2

    latent = rng.uniform(0.0, 1.0, half)

    numeric_pools = [
        _numeric_pool(rng, low, high, decimals) for (low, high, decimals) in _NUMERIC_SCALES
    ]
    numeric_cols = []
    for c, pool in enumerate(numeric_pools):
        decimals = _NUMERIC_SCALES[c][2]
        if c < 3:  # latent-coupled, monotone with noise
            z = np.clip(latent + rng.normal(0.0, 0.12, half), 0.0, 1.0)
            idx = (z * (len(pool) - 1)).astype(int)
        else:
            weights = rng.uniform(0.5, 1.5, len(pool))
            weights /= weights.sum()
            idx = rng.choice(len(pool), half, p=weights)
        numeric_cols.append([_format_number(pool[i], decimals) for i in idx])

    cat_cols = []
    levels = _LEVEL_TRIPLES[index % len(_LEVEL_TRIPLES)]
    z = np.clip(latent + rng.normal(0.0, 0.15, half), 0.0, 1.0)
    cat_cols.append([levels[min(2, int(v * 3))] for v in z])
    for c in range(1, 5):
        vocab_size = int(rng.integers(3, 7))
        start = int(rng.integers(0, len(_VALUE_WORDS) - vocab_size))
        vocab = _VALUE_WORDS[start : start + vocab_size]
        weights = rng.uniform(0.5, 1.5, vocab_size)
        weights /= weights.sum()
        cat_cols.append([vocab[i] for i in rng.choice(vocab_size, half, p=weights)])

    cities = [_CITY_WORDS[i] for i in rng.choice(len(_CITY_WORDS), half)]
    months = rng.integers(1, 13, half)
    days = rng.integers(1, 28, half)
    dates = [f"2024-{m:02d}-{d:02d}" for m, d in zip(months, days)]

    # sporadic missing values in one numeric, one categorical and the date column
    missing_numeric = rng.random(half) < 0.02
    missing_cat = rng.random(half) < 0.02
    missing_date = rng.random(half) < 0.02

    def base_row(i: int) -> list[str]:
        row = []
        for c in range(7):
            if c == 5 and missing_numeric[i]:
                row.append("NaN")
            else:
                row.append(numeric_cols[c][i])
        for c in range(5):
            if c == 3 and missing_cat[i]:
                row.append("")
            else:
                row.append(cat_cols[c][i])
        row.append(cities[i])
        row.append("null" if missing_date[i] else dates[i])
        return row

    # twin pairs: the second row of each pair resamples 1..3 columns, so the
    # corpus contains near-duplicates that differ in a handful of cells
    records = [header]
    row_id = 0
    for i in range(half):
        original = base_row(i)
        records.append([str(row_id)] + original)
        row_id += 1
        twin = list(original)
        for col in rng.choice(13, size=int(rng.integers(1, 4)), replace=False):
            col = int(col)
            if col < 7:
                pool = numeric_pools[col]
                decimals = _NUMERIC_SCALES[col][2]
                twin[col] = _format_number(pool[int(rng.integers(len(pool)))], decimals)
            elif col < 12:
                vocab = sorted(set(cat_cols[col - 7]))
                twin[col] = vocab[int(rng.integers(len(vocab)))]
            else:
                twin[col] = _CITY_WORDS[int(rng.integers(len(_CITY_WORDS)))]
        records.append([str(row_id)] + twin)
        row_id += 1
    return records


def make_fixture_tables(seed: int = FIXTURE_SEED, themes: list[str] | None = None) -> list[Table]:
    themes = themes or list(_THEMES)
    return [
        infer_schema(make_fixture_csv_rows(theme, i, seed), dataset_id=theme)
        for i, theme in enumerate(themes)
    ]


def write_fixture_csvs(directory: Path, seed: int = FIXTURE_SEED, themes: list[str] | None = None) -> list[Path]:
    themes = themes or list(_THEMES)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for i, theme in enumerate(themes):
        path = directory / f"{theme}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            csv.writer(fh).writerows(make_fixture_csv_rows(theme, i, seed))
        paths.append(path)
    return paths
