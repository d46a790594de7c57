"""Contrastive training of the hashed-projection embedder.

The objective contrasts each query's positive similarity against its mined
hard negatives plus the other queries' positives in the batch, at temperature
tau. Only the projection matrix is trainable; featurization is frozen, which
keeps the analytic gradient exact and cheap.
"""

from __future__ import annotations

import hashlib
import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, TrainError
from .mining import Triplet
from .util import rng_for

logger = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.05
DEFAULT_BATCH_SIZE = 64
DEFAULT_EPOCHS = 2
DEFAULT_LEARNING_RATE = 1e-3


@dataclass
class TrainConfig:
    temperature: float = DEFAULT_TEMPERATURE
    batch_size: int = DEFAULT_BATCH_SIZE
    epochs: int = DEFAULT_EPOCHS
    learning_rate: float = DEFAULT_LEARNING_RATE
    seed: int = 0
    gradient_clip: float | None = None
    momentum: float = 0.0
    negatives_per_query: int | None = None

    def __post_init__(self):
        if self.temperature <= 0:
            raise ConfigError("temperature must be positive")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2")
        if self.epochs < 1:
            raise ConfigError("epochs must be at least 1")
        if self.gradient_clip is not None and self.gradient_clip <= 0:
            raise ConfigError("gradient_clip must be positive when set")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError("momentum must be in [0, 1)")


@dataclass
class TrainReport:
    step_losses: list[float]
    final_mean_loss: float
    wall_seconds: float
    param_checksum: str
    duplicate_positive_collisions: int
    steps: int
    epochs: int

    def to_dict(self) -> dict:
        return {
            "step_losses": self.step_losses,
            "final_mean_loss": self.final_mean_loss,
            "wall_seconds": self.wall_seconds,
            "param_checksum": self.param_checksum,
            "duplicate_positive_collisions": self.duplicate_positive_collisions,
            "steps": self.steps,
            "epochs": self.epochs,
        }


def info_nce_loss(sims: Sequence[np.ndarray], temperature: float) -> tuple[float, list[np.ndarray]]:
    """Mean contrastive loss over queries plus its gradient w.r.t. every sim.

    Each entry of `sims` is one query's similarity list with the positive
    first: (s+, s-_1, ..., s-_n). The log-sum-exp is stabilized by max
    subtraction.
    """
    if temperature <= 0:
        raise ConfigError("temperature must be positive")
    if not sims:
        raise TrainError("no similarity rows given")
    losses = []
    grads: list[np.ndarray] = []
    count = len(sims)
    for row in sims:
        row = np.asarray(row, dtype=np.float64)
        if row.size < 1:
            raise TrainError("each query needs at least its positive similarity")
        if not np.all(np.isfinite(row)):
            raise TrainError("non-finite similarity encountered")
        z = row / temperature
        m = z.max()
        exps = np.exp(z - m)
        total = exps.sum()
        losses.append(float(np.log(total) + m - z[0]))
        p = exps / total
        grad = p / temperature
        grad[0] -= 1.0 / temperature
        grads.append(grad / count)
    return float(np.mean(losses)), grads


@dataclass
class Batch:
    """One training window: deduplicated features plus index structure."""

    features: sp.csr_matrix
    query_rows: np.ndarray
    positive_rows: np.ndarray
    negative_rows: list[np.ndarray]
    duplicate_positive_collisions: int = 0
    texts: list[str] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.query_rows)


def _dedupe_window(
    triplets: Sequence[Triplet], max_negatives: int | None
) -> tuple[list[str], list[int], list[int], list[list[int]], int]:
    texts: list[str] = []
    index: dict[str, int] = {}

    def row_of(text: str) -> int:
        row = index.get(text)
        if row is None:
            row = len(texts)
            index[text] = row
            texts.append(text)
        return row

    q_rows, p_rows, n_rows = [], [], []
    positive_texts = []
    for triplet in triplets:
        q_rows.append(row_of(triplet.query_text))
        p_rows.append(row_of(triplet.positive.text))
        positive_texts.append(triplet.positive.text)
        negatives = triplet.negatives
        if max_negatives is not None:
            negatives = negatives[:max_negatives]
        n_rows.append([row_of(n.text) for n in negatives])
    collisions = len(positive_texts) - len(set(positive_texts))
    return texts, q_rows, p_rows, n_rows, collisions


def assemble_batch(
    triplets: Sequence[Triplet], embedder, max_negatives: int | None = None
) -> Batch:
    """Featurize one window of triplets and record its index structure.

    For query i the negative set is its own hard negatives plus every other
    query's positive in the window; a query's own positive never appears in
    its negative set. Duplicate texts are embedded once but all similarity
    terms are kept.
    """
    if not triplets:
        raise TrainError("empty triplet window")
    texts, q_rows, p_rows, n_rows, collisions = _dedupe_window(triplets, max_negatives)
    features = embedder.featurize(texts)
    return Batch(
        features=features,
        query_rows=np.asarray(q_rows, dtype=np.int64),
        positive_rows=np.asarray(p_rows, dtype=np.int64),
        negative_rows=[np.asarray(r, dtype=np.int64) for r in n_rows],
        duplicate_positive_collisions=collisions,
        texts=texts,
    )


def batch_similarities(batch: Batch, projection: np.ndarray) -> list[np.ndarray]:
    """Per-query similarity rows (positive first) under the given projection."""
    weights = np.ascontiguousarray(projection.T)
    raw = np.asarray(batch.features @ weights, dtype=np.float64)
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    embeddings = raw / np.where(norms > 0, norms, 1.0)
    rows, _ = _similarity_rows(batch, embeddings)
    return rows


def _similarity_rows(batch: Batch, embeddings: np.ndarray):
    """Assemble (s+, hard..., in-batch...) rows plus the pair index lists."""
    queries = embeddings[batch.query_rows]
    positives = embeddings[batch.positive_rows]
    pos_matrix = queries @ positives.T  # (B, B); diagonal is each query's s+
    size = batch.size
    rows: list[np.ndarray] = []
    pairs: list[list[int]] = []  # embedding-row index of each sim entry's document
    for i in range(size):
        hard = batch.negative_rows[i]
        hard_sims = embeddings[hard] @ queries[i] if hard.size else np.zeros(0)
        inbatch = [j for j in range(size) if j != i]
        row = np.concatenate(([pos_matrix[i, i]], hard_sims, pos_matrix[i, inbatch]))
        rows.append(row)
        pairs.append([batch.positive_rows[i], *hard.tolist(), *[batch.positive_rows[j] for j in inbatch]])
    return rows, pairs


def _step_transposed(
    weights: np.ndarray, batch: Batch, temperature: float, want_grad: bool = True
) -> tuple[float, np.ndarray | None]:
    """Forward/backward with the projection held as (feature_dim, output_dim)."""
    raw = np.asarray(batch.features @ weights, dtype=np.float64)
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    safe = np.where(norms > 0, norms, 1.0)
    embeddings = raw / safe
    if not np.all(np.isfinite(embeddings)):
        raise TrainError("non-finite embedding during training step")
    rows, pairs = _similarity_rows(batch, embeddings)
    loss, grads = info_nce_loss(rows, temperature)
    if not want_grad:
        return loss, None

    grad_e = np.zeros_like(embeddings)
    for i in range(batch.size):
        q_row = batch.query_rows[i]
        coeffs = grads[i]
        doc_rows = pairs[i]
        grad_e[q_row] += coeffs @ embeddings[doc_rows]
        np.add.at(grad_e, doc_rows, np.outer(coeffs, embeddings[q_row]))

    # back through the L2 normalization: du = (g - (g.e) e) / ||u||
    inner = np.sum(grad_e * embeddings, axis=1, keepdims=True)
    grad_u = (grad_e - inner * embeddings) / safe
    grad_weights = np.asarray(batch.features.T @ grad_u)
    return loss, grad_weights


def contrastive_step(
    projection: np.ndarray, batch: Batch, temperature: float, want_grad: bool = True
) -> tuple[float, np.ndarray | None]:
    """Loss (and analytic gradient w.r.t. the projection) for one window."""
    loss, grad = _step_transposed(
        np.ascontiguousarray(projection.T), batch, temperature, want_grad
    )
    if grad is None:
        return loss, None
    return loss, np.ascontiguousarray(grad.T)


def train(triplets: Sequence[Triplet], embedder, cfg: TrainConfig) -> TrainReport:
    """Seeded-epoch gradient descent on the embedder's projection.

    Features for every unique text are computed once up front; each epoch
    reshuffles the triplets as a pure function of (seed, epoch index).
    """
    if not triplets:
        raise TrainError("no triplets to train on")
    embedder._ensure_ready()
    started = time.perf_counter()

    texts, q_rows, p_rows, n_rows, _ = _dedupe_window(triplets, cfg.negatives_per_query)
    features = embedder.featurize(texts)

    weights = np.ascontiguousarray(embedder.projection_.T)
    velocity = np.zeros_like(weights) if cfg.momentum else None
    step_losses: list[float] = []
    collisions = 0
    epoch_start_step = 0

    for epoch in range(cfg.epochs):
        order = rng_for(cfg.seed, "train-epoch", epoch).permutation(len(triplets))
        epoch_start_step = len(step_losses)
        for start in range(0, len(order), cfg.batch_size):
            window = order[start : start + cfg.batch_size]
            batch = _subset_batch(features, texts, q_rows, p_rows, n_rows, window)
            collisions += batch.duplicate_positive_collisions
            loss, grad = _step_transposed(weights, batch, cfg.temperature)
            step = len(step_losses)
            if not np.isfinite(loss):
                raise TrainError(f"non-finite loss at step {step}")
            if cfg.gradient_clip is not None:
                norm = float(np.linalg.norm(grad))
                if norm > cfg.gradient_clip:
                    grad *= cfg.gradient_clip / norm
            if velocity is not None:
                velocity *= cfg.momentum
                velocity += grad
                weights -= cfg.learning_rate * velocity
            else:
                weights -= cfg.learning_rate * grad
            step_losses.append(loss)

    embedder.projection_ = np.ascontiguousarray(weights.T)
    final_losses = step_losses[epoch_start_step:]
    checksum = embedder.checksum()
    return TrainReport(
        step_losses=step_losses,
        final_mean_loss=float(np.mean(final_losses)),
        wall_seconds=time.perf_counter() - started,
        param_checksum=checksum,
        duplicate_positive_collisions=collisions,
        steps=len(step_losses),
        epochs=cfg.epochs,
    )


def _subset_batch(features, texts, q_rows, p_rows, n_rows, window) -> Batch:
    """Build a window Batch that reuses globally prefeaturized rows."""
    used: list[int] = []
    local: dict[int, int] = {}

    def local_row(global_row: int) -> int:
        row = local.get(global_row)
        if row is None:
            row = len(used)
            local[global_row] = row
            used.append(global_row)
        return row

    q_local, p_local, n_local = [], [], []
    positive_texts = []
    for t in window:
        q_local.append(local_row(q_rows[t]))
        p_local.append(local_row(p_rows[t]))
        positive_texts.append(texts[p_rows[t]])
        n_local.append([local_row(r) for r in n_rows[t]])
    return Batch(
        features=features[used],
        query_rows=np.asarray(q_local, dtype=np.int64),
        positive_rows=np.asarray(p_local, dtype=np.int64),
        negative_rows=[np.asarray(r, dtype=np.int64) for r in n_local],
        duplicate_positive_collisions=len(positive_texts) - len(set(positive_texts)),
        texts=[texts[i] for i in used],
    )
