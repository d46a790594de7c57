"""Small shared helpers: seeded RNG derivation, rounding, line-oriented IO."""

from __future__ import annotations

import hashlib
import json
from decimal import ROUND_HALF_UP, Decimal, localcontext
from pathlib import Path
from typing import Any, Iterable, Iterator

import numpy as np


def stable_hash64(*parts: str | int) -> int:
    """Deterministic 64-bit hash of the given parts (process-independent)."""
    h = hashlib.blake2b(digest_size=8)
    for part in parts:
        h.update(str(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "little")


def rng_for(seed: int, *tags: str | int) -> np.random.Generator:
    """Child RNG derived from a master seed and a stream tag.

    Streams with distinct tags are independent; the same (seed, tags) always
    yields the same generator state.
    """
    return np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFF, stable_hash64(*tags)]))


def round_half_away(value: float, digits: int) -> float:
    """Round to `digits` decimals with ties going away from zero.

    Operates on the shortest decimal repr of the float, so 2.675 -> 2.68
    rather than inheriting the binary artifact 2.67499...
    """
    with localcontext() as ctx:
        ctx.prec = 60
        quantum = Decimal(1).scaleb(-digits)
        return float(Decimal(str(value)).quantize(quantum, rounding=ROUND_HALF_UP))


def format_number(value: float, digits: int = 2) -> str:
    """Fixed-point rendering at `digits` decimals, trailing zeros stripped.

    Integral results render with no decimal point; negative zero collapses
    to "0".
    """
    with localcontext() as ctx:
        ctx.prec = 60
        quantum = Decimal(1).scaleb(-digits)
        quantized = Decimal(str(value)).quantize(quantum, rounding=ROUND_HALF_UP)
    text = format(quantized, "f")
    if "." in text:
        text = text.rstrip("0").rstrip(".")
    if text in ("-0", ""):
        text = "0"
    return text


def canonical_json(obj: Any) -> str:
    """Stable single-line JSON used for hashing and artifact records."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def config_digest(obj: Any) -> str:
    return hashlib.sha256(canonical_json(obj).encode("utf-8")).hexdigest()[:12]


def write_jsonl(path: str | Path, records: Iterable[dict], header: dict | None = None) -> int:
    """Write one JSON object per line; optional header record goes first.

    Returns the number of data records written.
    """
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        if header is not None:
            fh.write(canonical_json({"_meta": header}) + "\n")
        for record in records:
            fh.write(canonical_json(record) + "\n")
            count += 1
    return count


def read_jsonl(path: str | Path) -> Iterator[dict]:
    """Yield data records from a JSONL file, skipping the header record."""
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if "_meta" in record and len(record) == 1:
                continue
            yield record


def read_jsonl_header(path: str | Path) -> dict | None:
    with open(path, "r", encoding="utf-8") as fh:
        first = fh.readline().strip()
    if not first:
        return None
    record = json.loads(first)
    if "_meta" in record and len(record) == 1:
        return record["_meta"]
    return None
