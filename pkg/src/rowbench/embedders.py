"""Embedders: a trainable hashed-projection text embedder, a remote client,
cosine similarity, and exact top-k search.

The desk embedder hashes word tokens into a sparse count vector and, for every
numeric token, adds a bank of soft-threshold features tanh((l(v) - g_j) / w)
over a fixed grid in signed-log space, keyed by the nearest preceding content
word (normally the column name). A bag of tokens alone cannot express
"greater than"; the monotone grid features give the trained projection that
capacity. Embeddings are L2-normalized projections of the feature vector.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
import struct
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator

from .errors import EmbedError
from .util import rng_for

logger = logging.getLogger(__name__)

MATRIX_MAGIC = b"RBEM"
CHECKPOINT_MAGIC = b"RBCK"
FORMAT_VERSION = 1

DEFAULT_FEATURE_DIM = 2**15
DEFAULT_OUTPUT_DIM = 256
DEFAULT_GRID_POINTS = 32
DEFAULT_GRID_LOW = -4.0
DEFAULT_GRID_HIGH = 6.0
DEFAULT_GRID_WIDTH = 0.5

_TOKEN_RE = re.compile(r"-?\d+(?:\.\d+)?(?:e-?\d+)?|[a-z]+")

# Template glue that should not serve as the column key for a numeric token.
_GLUE_WORDS = frozenset(
    """
    the is a an and or where find records record which have has with of get
    all entries filter search for i need data than greater less more above
    below over under equal equals to show me rows row that as conditions look
    up matching select from table this between gt lt gte lte in are was were
    """.split()
)


def signed_log(value: float) -> float:
    """Sign-preserving magnitude compression: sign(v) * log10(1 + |v|)."""
    return math.copysign(math.log10(1.0 + abs(value)), value)


def default_threshold_grid() -> np.ndarray:
    return np.linspace(DEFAULT_GRID_LOW, DEFAULT_GRID_HIGH, DEFAULT_GRID_POINTS)


def _is_numeric_token(token: str) -> bool:
    first = token[0]
    return first.isdigit() or (first == "-" and len(token) > 1)


class HashedProjectionEmbedder(BaseEstimator):
    """Trainable numeric-aware embedder: hashed features times a projection.

    Parameters
    ----------
    feature_dim : hashed feature space size m (power of two).
    output_dim : embedding dimension d.
    hash_seed : seed for the token hash (features are a pure function of
        text and this seed).
    threshold_grid : grid points in signed-log space for the numeric
        soft-threshold features; None means the default 32 points evenly
        spaced in [-4, 6]; an empty sequence disables numeric features
        entirely (a pure bag-of-tokens model).
    grid_width : softness w of the tanh thresholds.
    init_seed : seed for the Gaussian projection initialization.
    """

    def __init__(
        self,
        feature_dim: int = DEFAULT_FEATURE_DIM,
        output_dim: int = DEFAULT_OUTPUT_DIM,
        hash_seed: int = 0,
        threshold_grid: Sequence[float] | None = None,
        grid_width: float = DEFAULT_GRID_WIDTH,
        init_seed: int = 0,
    ):
        self.feature_dim = feature_dim
        self.output_dim = output_dim
        self.hash_seed = hash_seed
        self.threshold_grid = threshold_grid
        self.grid_width = grid_width
        self.init_seed = init_seed

    # -- lazy state -------------------------------------------------------

    def _ensure_ready(self) -> None:
        if hasattr(self, "projection_"):
            return
        if self.feature_dim < 1 or (self.feature_dim & (self.feature_dim - 1)) != 0:
            raise EmbedError("feature_dim must be a positive power of two")
        if self.output_dim < 1:
            raise EmbedError("output_dim must be positive")
        if self.grid_width <= 0:
            raise EmbedError("grid_width must be positive")
        grid = (
            default_threshold_grid()
            if self.threshold_grid is None
            else np.asarray(list(self.threshold_grid), dtype=float)
        )
        if grid.size and np.any(np.diff(grid) <= 0):
            raise EmbedError("threshold grid must be strictly ascending")
        self.grid_ = grid
        rng = rng_for(self.init_seed, "projection", self.hash_seed)
        self.projection_ = rng.standard_normal((self.output_dim, self.feature_dim)) / math.sqrt(
            self.feature_dim
        )
        self._word_bins: dict[str, int] = {}
        self._grid_bins: dict[str, np.ndarray] = {}
        self.empty_text_count_ = 0

    @property
    def dim(self) -> int:
        return self.output_dim

    def _hash_bin(self, payload: str) -> int:
        digest = hashlib.blake2b(
            payload.encode("utf-8"), digest_size=8, salt=struct.pack("<q", self.hash_seed)
        ).digest()
        return int.from_bytes(digest, "little") % self.feature_dim

    def _word_bin(self, token: str) -> int:
        idx = self._word_bins.get(token)
        if idx is None:
            idx = self._hash_bin("w|" + token)
            self._word_bins[token] = idx
        return idx

    def _grid_bin_row(self, key: str) -> np.ndarray:
        row = self._grid_bins.get(key)
        if row is None:
            row = np.array(
                [self._hash_bin(f"g|{key}|{j}") for j in range(self.grid_.size)], dtype=np.int64
            )
            self._grid_bins[key] = row
        return row

    # -- featurization ----------------------------------------------------

    def featurize(self, texts: Sequence[str], normalize: bool = True) -> sp.csr_matrix:
        """Hashed sparse features, one L2-normalized row per text."""
        self._ensure_ready()
        data: list[float] = []
        cols: list[int] = []
        indptr = [0]
        grid = self.grid_
        width = self.grid_width
        for text in texts:
            accum: dict[int, float] = {}
            key = ""
            for token in _TOKEN_RE.findall(text.lower()):
                if _is_numeric_token(token):
                    idx = self._word_bin(token)
                    accum[idx] = accum.get(idx, 0.0) + 1.0
                    if grid.size:
                        level = signed_log(float(token))
                        bins = self._grid_bin_row(key)
                        values = np.tanh((level - grid) / width)
                        for idx, value in zip(bins, values):
                            accum[idx] = accum.get(idx, 0.0) + value
                else:
                    idx = self._word_bin(token)
                    accum[idx] = accum.get(idx, 0.0) + 1.0
                    if token not in _GLUE_WORDS:
                        key = token
            if not accum:
                self.empty_text_count_ += 1
                logger.warning("empty feature vector for text %r", text[:40])
            cols.extend(accum.keys())
            data.extend(accum.values())
            indptr.append(len(cols))
        matrix = sp.csr_matrix(
            (np.asarray(data, dtype=np.float64), np.asarray(cols, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
            shape=(len(texts), self.feature_dim),
        )
        if normalize:
            norms = np.sqrt(np.asarray(matrix.multiply(matrix).sum(axis=1)).ravel())
            scale = np.where(norms > 0, 1.0 / np.where(norms > 0, norms, 1.0), 0.0)
            matrix = (sp.diags(scale) @ matrix).tocsr()
        matrix.sort_indices()
        return matrix

    def transform(self, texts: Sequence[str]) -> np.ndarray:
        """Embed texts as unit vectors, order preserved; exact for any batch split."""
        self._ensure_ready()
        feats = self.featurize(texts)
        return project_features(feats, self.projection_)

    def fit(self, X, y=None, config=None):
        """Train the projection on contrastive triplets (X is the triplet list)."""
        from .training import TrainConfig, train

        self._ensure_ready()
        cfg = config if config is not None else TrainConfig()
        self.train_report_ = train(X, self, cfg)
        return self

    # -- persistence ------------------------------------------------------

    def checksum(self) -> str:
        self._ensure_ready()
        return hashlib.sha256(self.projection_.astype(np.float32).tobytes()).hexdigest()

    def save(self, path: str | Path) -> None:
        self._ensure_ready()
        grid = self.grid_
        with open(path, "wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<IIIqI", FORMAT_VERSION, self.feature_dim, self.output_dim,
                                 self.hash_seed, grid.size))
            fh.write(grid.astype("<f8").tobytes())
            fh.write(struct.pack("<d", self.grid_width))
            fh.write(self.projection_.astype("<f4").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "HashedProjectionEmbedder":
        with open(path, "rb") as fh:
            magic = fh.read(4)
            if magic != CHECKPOINT_MAGIC:
                raise EmbedError(f"{path}: not a checkpoint file")
            version, m, d, hash_seed, grid_size = struct.unpack("<IIIqI", fh.read(24))
            if version != FORMAT_VERSION:
                raise EmbedError(f"{path}: unsupported checkpoint version {version}")
            grid = np.frombuffer(fh.read(8 * grid_size), dtype="<f8").copy()
            (grid_width,) = struct.unpack("<d", fh.read(8))
            body = np.frombuffer(fh.read(4 * m * d), dtype="<f4").copy()
        embedder = cls(
            feature_dim=m,
            output_dim=d,
            hash_seed=hash_seed,
            threshold_grid=grid.tolist(),
            grid_width=grid_width,
        )
        embedder._ensure_ready()
        embedder.projection_ = body.astype(np.float64).reshape(d, m)
        return embedder


def project_features(features: sp.csr_matrix, projection: np.ndarray) -> np.ndarray:
    """Project sparse features and L2-normalize rows (zero rows stay zero).

    Small batches gather the touched projection columns directly, so embedding
    a handful of texts never materializes a transposed copy of the matrix.
    """
    n = features.shape[0]
    if n <= 8:
        raw = np.zeros((n, projection.shape[0]), dtype=np.float64)
        for i in range(n):
            lo, hi = features.indptr[i], features.indptr[i + 1]
            cols = features.indices[lo:hi]
            if cols.size:
                raw[i] = projection[:, cols] @ features.data[lo:hi]
    else:
        raw = np.asarray(features @ np.ascontiguousarray(projection.T), dtype=np.float64)
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    return raw / np.where(norms > 0, norms, 1.0)


def embed_texts(texts: Sequence[str], embedder) -> np.ndarray:
    """Embed texts with any embedder handle, enforcing the unit-norm contract."""
    vectors = np.asarray(embedder.transform(list(texts)), dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] != len(texts):
        raise EmbedError(f"embedder returned shape {vectors.shape} for {len(texts)} texts")
    expected = getattr(embedder, "dim", vectors.shape[1])
    if vectors.shape[1] != expected:
        raise EmbedError(f"embedder returned dimension {vectors.shape[1]}, expected {expected}")
    norms = np.linalg.norm(vectors, axis=1, keepdims=True)
    return vectors / np.where(norms > 0, norms, 1.0)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two unit vectors (plain dot product)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise EmbedError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.dot(a, b))


class SearchIndex:
    """Exact inner-product search over a fixed embedded corpus.

    Rows are pre-sorted by doc_id once so per-query ranking is a matvec plus
    a stable argsort; equal scores therefore break toward the smaller doc_id.
    """

    def __init__(self, corpus_embeddings: np.ndarray, doc_ids: Sequence[str]):
        if corpus_embeddings.shape[0] == 0:
            raise EmbedError("empty corpus")
        if corpus_embeddings.shape[0] != len(doc_ids):
            raise EmbedError("corpus embeddings and doc_ids disagree in length")
        id_order = sorted(range(len(doc_ids)), key=lambda i: doc_ids[i])
        self.doc_ids = [doc_ids[i] for i in id_order]
        self.embeddings = np.ascontiguousarray(
            np.asarray(corpus_embeddings, dtype=np.float64)[id_order]
        )

    def __len__(self) -> int:
        return len(self.doc_ids)

    def top_k(self, query: np.ndarray, top_k: int) -> list[tuple[str, float]]:
        scores = self.embeddings @ np.asarray(query, dtype=np.float64)
        order = np.argsort(-scores, kind="stable")[: min(top_k, len(scores))]
        return [(self.doc_ids[i], float(scores[i])) for i in order]

    def ranked_ids(self, query: np.ndarray, top_k: int) -> list[str]:
        return [doc_id for doc_id, _ in self.top_k(query, top_k)]


def exact_search(
    query: np.ndarray,
    corpus_embeddings: np.ndarray,
    doc_ids: Sequence[str],
    top_k: int = 10,
) -> list[tuple[str, float]]:
    """Full-scan inner-product search, descending score, ties by doc_id."""
    return SearchIndex(corpus_embeddings, doc_ids).top_k(query, top_k)


# -- remote embedding service client --------------------------------------


@dataclass
class RemoteEmbedderConfig:
    endpoint: str
    model: str
    batch_size: int = 32
    timeout: float = 30.0
    retries: int = 3
    expected_dim: int | None = None
    api_key: str | None = None
    backoff: float = 0.5

    def __post_init__(self):
        if self.batch_size < 1:
            raise EmbedError("batch_size must be at least 1")


class RemoteEmbedder:
    """Client for an embeddings endpoint speaking the common JSON protocol.

    POST {"model": ..., "input": [texts]} and expect
    {"data": [{"embedding": [...]}, ...]} index-aligned with the input.
    """

    def __init__(self, config: RemoteEmbedderConfig):
        self.config = config
        self._dim: int | None = config.expected_dim

    @property
    def dim(self) -> int:
        if self._dim is None:
            raise EmbedError("remote dimension unknown before the first call")
        return self._dim

    def transform(self, texts: Sequence[str]) -> np.ndarray:
        cfg = self.config
        rows: list[list[float]] = []
        for start in range(0, len(texts), cfg.batch_size):
            batch = list(texts[start : start + cfg.batch_size])
            rows.extend(self._embed_batch(batch))
        matrix = np.asarray(rows, dtype=np.float64)
        if matrix.size == 0:
            return np.zeros((0, self._dim or 0))
        if self._dim is None:
            self._dim = matrix.shape[1]
        if cfg.expected_dim is not None and matrix.shape[1] != cfg.expected_dim:
            raise EmbedError(
                f"remote returned dimension {matrix.shape[1]}, expected {cfg.expected_dim}"
            )
        norms = np.linalg.norm(matrix, axis=1, keepdims=True)
        return matrix / np.where(norms > 0, norms, 1.0)

    def _embed_batch(self, batch: list[str]) -> list[list[float]]:
        cfg = self.config
        payload = json.dumps({"model": cfg.model, "input": batch}).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if cfg.api_key:
            headers["Authorization"] = f"Bearer {cfg.api_key}"
        last_error: Exception | None = None
        for attempt in range(cfg.retries + 1):
            if attempt:
                time.sleep(cfg.backoff * (2 ** (attempt - 1)))
            request = urllib.request.Request(cfg.endpoint, data=payload, headers=headers)
            try:
                with urllib.request.urlopen(request, timeout=cfg.timeout) as response:
                    body = json.loads(response.read().decode("utf-8"))
                vectors = [item["embedding"] for item in body["data"]]
                if len(vectors) != len(batch):
                    raise EmbedError(
                        f"remote returned {len(vectors)} embeddings for {len(batch)} texts"
                    )
                return vectors
            except EmbedError:
                raise
            except (urllib.error.URLError, urllib.error.HTTPError, TimeoutError, OSError, ValueError, KeyError) as exc:
                last_error = exc
                logger.warning("remote embed attempt %d failed: %s", attempt + 1, exc)
        raise EmbedError(f"remote embedding failed after {cfg.retries + 1} attempts: {last_error}")


# -- embedding matrix persistence ------------------------------------------


def write_matrix(path: str | Path, matrix: np.ndarray) -> None:
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    if matrix.ndim != 2:
        raise EmbedError("matrix must be 2-dimensional")
    count, dim = matrix.shape
    with open(path, "wb") as fh:
        fh.write(MATRIX_MAGIC)
        fh.write(struct.pack("<III", FORMAT_VERSION, dim, count))
        fh.write(matrix.tobytes())


def read_matrix(path: str | Path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MATRIX_MAGIC:
            raise EmbedError(f"{path}: not an embedding matrix file")
        version, dim, count = struct.unpack("<III", fh.read(12))
        if version != FORMAT_VERSION:
            raise EmbedError(f"{path}: unsupported matrix version {version}")
        body = np.frombuffer(fh.read(4 * dim * count), dtype="<f4").copy()
    return body.reshape(count, dim)


def write_doc_ids(path: str | Path, doc_ids: Sequence[str], meta: dict | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"_meta": meta or {}, "doc_ids": list(doc_ids)}, fh, sort_keys=True)


def read_doc_ids(path: str | Path) -> tuple[list[str], dict]:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return payload["doc_ids"], payload.get("_meta", {})
