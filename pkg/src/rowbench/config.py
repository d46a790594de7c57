"""Run configuration: a single declarative JSON file with full validation.

Unknown keys are rejected, defaults are injected, and all problems are
reported together with their key paths. The validated config (minus secrets
and the threads hint) is hashed; every run writes its artifacts under
output_dir/<hash> so differently-configured runs can never mix.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .errors import ConfigError
from .util import config_digest

_TEMPLATES = tuple(f"T{i}" for i in range(1, 13))

_REQUIRED = object()


def _positive_int(v) -> str | None:
    if not isinstance(v, int) or isinstance(v, bool) or v < 1:
        return "must be a positive integer"
    return None


def _nonneg_int(v) -> str | None:
    if not isinstance(v, int) or isinstance(v, bool) or v < 0:
        return "must be a nonnegative integer"
    return None


def _any_int(v) -> str | None:
    if not isinstance(v, int) or isinstance(v, bool):
        return "must be an integer"
    return None


def _positive_number(v) -> str | None:
    if not isinstance(v, (int, float)) or isinstance(v, bool) or v <= 0:
        return "must be positive"
    return None


def _number(v) -> str | None:
    if not isinstance(v, (int, float)) or isinstance(v, bool):
        return "must be a number"
    return None


def _probability(v) -> str | None:
    if not isinstance(v, (int, float)) or isinstance(v, bool) or not 0.0 <= v <= 1.0:
        return "must be a probability in [0, 1]"
    return None


def _string(v) -> str | None:
    if not isinstance(v, str) or not v:
        return "must be a non-empty string"
    return None


def _optional(check):
    def wrapped(v):
        if v is None:
            return None
        return check(v)

    return wrapped


def _string_list(v) -> str | None:
    if not isinstance(v, list) or not all(isinstance(x, str) and x for x in v):
        return "must be a list of non-empty strings"
    return None


def _template(v) -> str | None:
    if v not in _TEMPLATES:
        return f"must be one of {', '.join(_TEMPLATES)}"
    return None


def _template_list(v) -> str | None:
    if not isinstance(v, list) or not v or any(t not in _TEMPLATES for t in v):
        return "must be a non-empty list of template ids T1..T12"
    return None


def _level_list(v) -> str | None:
    if not isinstance(v, list) or not v:
        return "must be a non-empty list of integers"
    if any(not isinstance(x, int) or isinstance(x, bool) or x < 0 for x in v):
        return "levels must be nonnegative integers"
    if any(b <= a for a, b in zip(v, v[1:])):
        return "levels must be strictly ascending"
    if v[-1] > 30:
        return "levels cannot exceed 30"
    return None


def _power_of_two(v) -> str | None:
    if not isinstance(v, int) or isinstance(v, bool) or v < 1 or v & (v - 1):
        return "must be a positive power of two"
    return None


def _batch_size(v) -> str | None:
    if not isinstance(v, int) or isinstance(v, bool) or v < 2:
        return "must be an integer of at least 2"
    return None


def _momentum(v) -> str | None:
    if not isinstance(v, (int, float)) or isinstance(v, bool) or not 0.0 <= v < 1.0:
        return "must be in [0, 1)"
    return None


def _temperature(v) -> str | None:
    if not isinstance(v, (int, float)) or isinstance(v, bool) or v <= 0:
        return "temperature must be positive"
    return None


def _per_cell(v) -> str | None:
    if v is None:
        return None
    if not isinstance(v, dict):
        return "must map 'qtype/k' to positive counts"
    for key, count in v.items():
        parts = str(key).split("/")
        if len(parts) != 2 or parts[0] not in ("categorical", "numeric", "mixed"):
            return f"bad cell key {key!r}, expected e.g. 'numeric/2'"
        try:
            k = int(parts[1])
        except ValueError:
            return f"bad cell key {key!r}, k must be an integer"
        if k < 1 or k > 3 or (parts[0] == "mixed" and k < 2):
            return f"bad cell key {key!r}, k out of range"
        if _positive_int(count):
            return f"count for {key!r} must be a positive integer"
    return None


def _sensitivity(v) -> str | None:
    if v == "auto":
        return None
    if not isinstance(v, list):
        return "must be 'auto' or a list of case objects"
    for case in v:
        if not isinstance(case, dict):
            return "each case must be an object"
        missing = {"column", "op", "thresholds", "grid_low", "grid_high"} - set(case)
        if missing:
            return f"case missing keys {sorted(missing)}"
        if case["op"] not in ("gt", "lt", "eq", "between"):
            return f"case op {case['op']!r} unknown"
    return None


# (default, validator); _REQUIRED default means the key must be present.
_SCHEMA: dict[str, Any] = {
    "inputs": (_REQUIRED, _string_list),
    "output_dir": (_REQUIRED, _string),
    "seed": (42, _any_int),
    "delimiter": (",", _string),
    "threads": (0, _nonneg_int),
    "corpus": {
        "cap": (10_000, _positive_int),
        "max_words": (512, _positive_int),
    },
    "targets": {
        "categorical_probability": (0.5, _probability),
        "max_examples_per_dataset": (200, _optional(_positive_int)),
    },
    "queries": {
        "total": (300, _positive_int),
        "per_cell": (None, _per_cell),
        "template": ("T1", _template),
        "min_matches": (5, _positive_int),
        "attempt_factor": (200, _positive_int),
    },
    "mining": {
        "top_k": (50, _positive_int),
        "negatives": (7, _positive_int),
    },
    "train": {
        "temperature": (0.05, _temperature),
        "batch_size": (64, _batch_size),
        "epochs": (2, _positive_int),
        "learning_rate": (1e-3, _positive_number),
        "momentum": (0.0, _momentum),
        "gradient_clip": (None, _optional(_positive_number)),
        "negatives_per_query": (None, _optional(_positive_int)),
    },
    "embedder": {
        "kind": ("desk", lambda v: None if v in ("desk", "remote") else "must be 'desk' or 'remote'"),
        "feature_dim": (2**15, _power_of_two),
        "output_dim": (256, _positive_int),
        "hash_seed": (0, _any_int),
        "grid_points": (32, _nonneg_int),
        "grid_low": (-4.0, _number),
        "grid_high": (6.0, _number),
        "grid_width": (0.5, _positive_number),
        "remote": {
            "endpoint": (None, _optional(_string)),
            "model": (None, _optional(_string)),
            "batch_size": (32, _positive_int),
            "timeout": (30.0, _positive_number),
            "retries": (3, _nonneg_int),
            "expected_dim": (None, _optional(_positive_int)),
        },
    },
    "mix": {
        "retrieval": (5, _positive_int),
        "classification": (1, _positive_int),
    },
    "analysis": {
        "sensitivity": ("auto", _sensitivity),
        "sensitivity_count": (12, _positive_int),
        "noise_levels": ([0, 5, 10, 15, 20, 25, 30], _level_list),
        "noise_base_columns": (15, _positive_int),
        "templates": (list(_TEMPLATES), _template_list),
        "template_intents": (12, _positive_int),
        "cluster_datasets": (3, _positive_int),
    },
}


def _walk(schema: dict, data: dict, path: str, errors: list[str]) -> dict:
    result: dict[str, Any] = {}
    for key, spec in schema.items():
        where = f"{path}{key}"
        if isinstance(spec, dict):
            sub = data.get(key, {})
            if not isinstance(sub, dict):
                errors.append(f"{where}: must be an object")
                sub = {}
            result[key] = _walk(spec, sub, where + ".", errors)
            continue
        default, check = spec
        if key not in data:
            if default is _REQUIRED:
                errors.append(f"{where}: required key missing")
                result[key] = None
            else:
                result[key] = default
            continue
        value = data[key]
        problem = check(value)
        if problem:
            errors.append(f"{where}: {problem}")
        result[key] = value
    for key in data:
        if key not in schema:
            errors.append(f"{path}{key}: unknown key")
    return result


@dataclass
class RunConfig:
    """Validated effective configuration plus its content hash."""

    values: dict
    config_hash: str
    source_path: str

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def seed(self) -> int:
        return self.values["seed"]

    @property
    def run_dir(self) -> Path:
        return Path(self.values["output_dir"]) / self.config_hash

    def artifact_header(self, artifact: str) -> dict:
        from . import __version__

        return {
            "artifact": artifact,
            "tool_version": __version__,
            "config_hash": self.config_hash,
            "seed": self.seed,
        }

    def echo(self) -> str:
        return json.dumps(self.values, indent=2, sort_keys=True)


def validate_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Load, validate, default-fill and hash a config file.

    `overrides` (e.g. a --seed flag) are applied before validation. Remote
    endpoint/model/key may come from ROWBENCH_REMOTE_* environment variables;
    the API key and the threads hint are excluded from the hash.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a JSON object")

    if overrides:
        for dotted, value in overrides.items():
            parts = dotted.split(".")
            node = raw
            for part in parts[:-1]:
                node = node.setdefault(part, {})
            node[parts[-1]] = value

    endpoint = os.environ.get("ROWBENCH_REMOTE_ENDPOINT")
    model = os.environ.get("ROWBENCH_REMOTE_MODEL")
    if endpoint or model:
        remote = raw.setdefault("embedder", {}).setdefault("remote", {})
        if endpoint:
            remote["endpoint"] = endpoint
        if model:
            remote["model"] = model

    errors: list[str] = []
    values = _walk(_SCHEMA, raw, "", errors)
    if not errors and values["embedder"]["kind"] == "remote":
        remote = values["embedder"]["remote"]
        if not remote["endpoint"] or not remote["model"]:
            errors.append("embedder.remote: endpoint and model are required for kind 'remote'")
    if not errors:
        grid = values["embedder"]
        if grid["grid_points"] > 0 and grid["grid_low"] >= grid["grid_high"]:
            errors.append("embedder.grid_low: must be below grid_high")
        if values["mining"]["negatives"] > values["mining"]["top_k"]:
            errors.append("mining.negatives: cannot exceed mining.top_k")
    if errors:
        raise ConfigError(errors)

    hashable = json.loads(json.dumps(values))
    hashable.pop("threads", None)
    return RunConfig(values=values, config_hash=config_digest(hashable), source_path=str(path))
