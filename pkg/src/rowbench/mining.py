"""Contrastive triplet construction with positive-aware hard negative mining.

For every query we retrieve the top-K most similar corpus documents under a
pluggable retriever, then keep only candidates that are symbolically wrong:
they violate the query's constraints (retrieval task) or carry a different
class label (classification task). The first H survivors, in similarity
order, become the hard negatives.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import RowbenchError
from .embedders import SearchIndex, embed_texts
from .queries import Query, QrelSet, make_class_query, satisfies
from .tables import Corpus, Document, Table
from .targets import LabeledExample, TargetSpec
from .util import read_jsonl, rng_for, write_jsonl

logger = logging.getLogger(__name__)

TASK_RETRIEVAL = "retrieval"
TASK_CLASSIFICATION = "classification"

DEFAULT_TOP_K = 50
DEFAULT_NEGATIVES = 7
DEFAULT_MIX_RATIO = (5, 1)


@dataclass
class MiningConfig:
    top_k: int = DEFAULT_TOP_K
    negatives: int = DEFAULT_NEGATIVES
    retriever: object = None  # any embedder handle with .transform / .dim

    def __post_init__(self):
        if self.top_k < 1 or self.negatives < 1:
            raise ValueError("top_k and negatives must be positive")
        if self.negatives > self.top_k:
            raise ValueError("negatives per query cannot exceed the candidate pool")


@dataclass(frozen=True)
class Triplet:
    query_text: str
    positive: Document
    negatives: tuple[Document, ...]
    task: str

    def __post_init__(self):
        if self.task not in (TASK_RETRIEVAL, TASK_CLASSIFICATION):
            raise ValueError(f"unknown task {self.task!r}")
        if any(n.doc_id == self.positive.doc_id for n in self.negatives):
            raise ValueError("positive document appears among its own negatives")


@dataclass
class EmbeddedPool:
    """A document set embedded once by the mining retriever."""

    documents: list[Document]
    embeddings: np.ndarray
    doc_ids: list[str]
    index: SearchIndex
    _by_id: dict[str, Document] | None = None

    @classmethod
    def build(cls, documents: Sequence[Document], retriever) -> "EmbeddedPool":
        docs = list(documents)
        if not docs:
            raise RowbenchError("cannot embed an empty document pool")
        vectors = embed_texts([d.text for d in docs], retriever)
        doc_ids = [d.doc_id for d in docs]
        return cls(
            documents=docs,
            embeddings=vectors,
            doc_ids=doc_ids,
            index=SearchIndex(vectors, doc_ids),
        )

    def by_id(self) -> dict[str, Document]:
        if self._by_id is None:
            self._by_id = {d.doc_id: d for d in self.documents}
        return self._by_id


def mine_hard_negatives(
    query_text: str,
    positive: Document,
    pool: EmbeddedPool,
    cfg: MiningConfig,
    is_wrong,
) -> list[Document]:
    """Top-K retrieve, drop the positive and every symbolically-correct
    candidate, return the first `cfg.negatives` survivors in similarity order.

    `is_wrong(doc)` must return True when the candidate violates the query's
    predicate and is therefore a valid negative.
    """
    query_vec = embed_texts([query_text], cfg.retriever)[0]
    ranked = pool.index.top_k(query_vec, cfg.top_k)
    docs_by_id = pool.by_id()
    negatives: list[Document] = []
    for doc_id, _score in ranked:
        if doc_id == positive.doc_id:
            continue
        doc = docs_by_id[doc_id]
        if not is_wrong(doc):
            continue
        negatives.append(doc)
        if len(negatives) >= cfg.negatives:
            break
    if not negatives:
        logger.warning("query %r: no valid hard negatives in the top %d", query_text[:60], cfg.top_k)
    return negatives


def build_retrieval_triplets(
    queries: Sequence[Query],
    qrels: QrelSet,
    corpus: Corpus,
    tables_by_id: Mapping[str, Table],
    cfg: MiningConfig,
    pool: EmbeddedPool | None = None,
) -> list[Triplet]:
    """One triplet per verified query: the seed document is the positive."""
    if pool is None:
        pool = EmbeddedPool.build(corpus.documents, cfg.retriever)
    docs_by_id = pool.by_id()
    triplets: list[Triplet] = []
    for query in sorted(queries, key=lambda q: q.qid):
        if len(qrels.get(query.qid, ())) < 1:
            raise RowbenchError(f"query {query.qid} has no qrels; verify before mining")
        positive = docs_by_id.get(query.seed_doc_id)
        if positive is None:
            raise RowbenchError(f"seed document {query.seed_doc_id} missing from corpus")

        def is_wrong(doc: Document, _q: Query = query) -> bool:
            table = tables_by_id[doc.dataset_id]
            return not satisfies(table.rows[doc.source_row], _q.constraints, table)

        negatives = mine_hard_negatives(query.text, positive, pool, cfg, is_wrong)
        if not negatives:
            continue
        triplets.append(
            Triplet(
                query_text=query.text,
                positive=positive,
                negatives=tuple(negatives),
                task=TASK_RETRIEVAL,
            )
        )
    return triplets


def build_classification_triplets(
    examples: Sequence[LabeledExample],
    target: TargetSpec,
    cfg: MiningConfig,
    max_triplets: int | None = None,
    seed: int = 0,
) -> list[Triplet]:
    """Label-description triplets over one dataset's target-masked documents.

    Negatives are same-dataset documents whose label differs from the
    positive's, mined positive-aware against the masked-document pool.
    """
    if not examples:
        return []
    dataset_ids = {e.dataset_id for e in examples}
    if len(dataset_ids) != 1:
        raise RowbenchError("classification examples must share one dataset")
    labels = {e.label for e in examples}
    if len(labels) < 2:
        logger.warning("dataset %s has a single class, skipping", next(iter(dataset_ids)))
        return []

    documents = [
        Document(
            doc_id=e.doc_id,
            dataset_id=e.dataset_id,
            text=e.text,
            source_row=i,
            column_names=(),
        )
        for i, e in enumerate(examples)
    ]
    label_by_id = {d.doc_id: e.label for d, e in zip(documents, examples)}
    pool = EmbeddedPool.build(documents, cfg.retriever)

    chosen = list(range(len(examples)))
    if max_triplets is not None and len(chosen) > max_triplets:
        rng = rng_for(seed, "cls-sample", next(iter(dataset_ids)))
        chosen = sorted(rng.permutation(len(chosen))[:max_triplets].tolist())

    triplets: list[Triplet] = []
    for i in chosen:
        example = examples[i]
        positive = documents[i]
        query_text = make_class_query(target.column, example.label)

        def is_wrong(doc: Document, _label: str = example.label) -> bool:
            return label_by_id[doc.doc_id] != _label

        negatives = mine_hard_negatives(query_text, positive, pool, cfg, is_wrong)
        if not negatives:
            continue
        triplets.append(
            Triplet(
                query_text=query_text,
                positive=positive,
                negatives=tuple(negatives),
                task=TASK_CLASSIFICATION,
            )
        )
    return triplets


def mix_dataset(
    retrieval: Sequence[Triplet],
    classification: Sequence[Triplet],
    ratio: tuple[int, int] = DEFAULT_MIX_RATIO,
    seed: int = 0,
) -> list[Triplet]:
    """Interleave seeded shuffles of both pools honoring ratio, e.g. 5:1.

    Once one pool runs dry the remainder of the other is appended (already
    shuffled).
    """
    r_ret, r_cls = ratio
    if r_ret < 1 or r_cls < 1:
        raise ValueError("ratio parts must be positive integers")
    rng = rng_for(seed, "mix")
    ret = [retrieval[i] for i in rng.permutation(len(retrieval))]
    cls = [classification[i] for i in rng.permutation(len(classification))]
    mixed: list[Triplet] = []
    i = j = 0
    while i < len(ret) and j < len(cls):
        take_r = min(r_ret, len(ret) - i)
        take_c = min(r_cls, len(cls) - j)
        if take_r < r_ret or take_c < r_cls:
            break
        mixed.extend(ret[i : i + take_r])
        mixed.extend(cls[j : j + take_c])
        i += take_r
        j += take_c
    mixed.extend(ret[i:])
    mixed.extend(cls[j:])
    return mixed


def write_triplets(path: str | Path, triplets: Iterable[Triplet], header: dict | None = None) -> int:
    def records():
        for t in triplets:
            yield {
                "task": t.task,
                "query": t.query_text,
                "positive_doc_id": t.positive.doc_id,
                "negative_doc_ids": [n.doc_id for n in t.negatives],
            }

    return write_jsonl(path, records(), header=header)


def write_resolved_triplets(path: str | Path, triplets: Iterable[Triplet], header: dict | None = None) -> int:
    """Trainer-facing variant with the full texts inlined."""

    def records():
        for t in triplets:
            yield {
                "task": t.task,
                "query": t.query_text,
                "positive_doc_id": t.positive.doc_id,
                "positive_text": t.positive.text,
                "negative_doc_ids": [n.doc_id for n in t.negatives],
                "negative_texts": [n.text for n in t.negatives],
            }

    return write_jsonl(path, records(), header=header)


def read_resolved_triplets(path: str | Path) -> list[Triplet]:
    triplets = []
    for record in read_jsonl(path):
        positive = Document(
            doc_id=record["positive_doc_id"],
            dataset_id="",
            text=record["positive_text"],
            source_row=-1,
            column_names=(),
        )
        negatives = tuple(
            Document(doc_id=doc_id, dataset_id="", text=text, source_row=-1, column_names=())
            for doc_id, text in zip(record["negative_doc_ids"], record["negative_texts"])
        )
        triplets.append(
            Triplet(
                query_text=record["query"],
                positive=positive,
                negatives=negatives,
                task=record["task"],
            )
        )
    return triplets
