"""Shared fixtures: the synthetic benchmark is built once per session and the
desk embedder trained once; acceptance criteria assert against this bundle."""

from __future__ import annotations

import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from synth import make_fixture_tables  # noqa: E402

from rowbench.embedders import HashedProjectionEmbedder  # noqa: E402
from rowbench.mining import (  # noqa: E402
    EmbeddedPool,
    MiningConfig,
    build_classification_triplets,
    build_retrieval_triplets,
    mix_dataset,
)
from rowbench.queries import feasible_cells, generate_verified_queries, spread_counts  # noqa: E402
from rowbench.tables import build_corpus  # noqa: E402
from rowbench.targets import candidate_targets, choose_target, make_labeled_examples  # noqa: E402
from rowbench.training import TrainConfig, train  # noqa: E402

SEED = 42
QUERY_TOTAL = 300
MINING_TOP_K = 50
MINING_NEGATIVES = 7
CLS_TRIPLETS_PER_DATASET = 6
TRAIN_EPOCHS = 60
TRAIN_LR = 0.02
TRAIN_BATCH = 64
TRAIN_TEMPERATURE = 0.05


@pytest.fixture(scope="session")
def bench():
    """Tables, corpus, verified queries and qrels for the synthetic suite."""
    tables = make_fixture_tables()
    tables_by_id = {t.dataset_id: t for t in tables}
    corpus = build_corpus(tables, seed=SEED)
    started = time.perf_counter()
    queries, qrels, rejected = generate_verified_queries(
        corpus, tables_by_id, spread_counts(QUERY_TOTAL, feasible_cells()), seed=SEED
    )
    return {
        "tables": tables,
        "tables_by_id": tables_by_id,
        "corpus": corpus,
        "queries": queries,
        "qrels": qrels,
        "rejected": rejected,
        "query_seconds": time.perf_counter() - started,
    }


@pytest.fixture(scope="session")
def trained_bundle(bench):
    """Mined triplets plus untrained/trained/bag-of-tokens embedders."""
    corpus = bench["corpus"]
    tables = bench["tables"]
    untrained = HashedProjectionEmbedder(init_seed=SEED)
    bag_of_tokens = HashedProjectionEmbedder(init_seed=SEED, threshold_grid=[])

    started = time.perf_counter()
    pool = EmbeddedPool.build(corpus.documents, untrained)
    cfg = MiningConfig(top_k=MINING_TOP_K, negatives=MINING_NEGATIVES, retriever=untrained)
    retrieval = build_retrieval_triplets(
        bench["queries"], bench["qrels"], corpus, bench["tables_by_id"], cfg, pool=pool
    )
    classification = []
    labels_by_doc = {}
    for table in tables:
        spec = choose_target(candidate_targets(table), table, seed=SEED)
        examples = make_labeled_examples(table, spec)
        for example in examples:
            labels_by_doc[example.doc_id] = example.label
        classification.extend(
            build_classification_triplets(
                examples, spec, cfg, max_triplets=CLS_TRIPLETS_PER_DATASET, seed=SEED
            )
        )
    triplets = mix_dataset(retrieval, classification, seed=SEED)
    mining_seconds = time.perf_counter() - started

    trained = HashedProjectionEmbedder(init_seed=SEED)
    started = time.perf_counter()
    report = train(
        triplets,
        trained,
        TrainConfig(
            temperature=TRAIN_TEMPERATURE,
            batch_size=TRAIN_BATCH,
            epochs=TRAIN_EPOCHS,
            learning_rate=TRAIN_LR,
            seed=SEED,
        ),
    )
    train_seconds = time.perf_counter() - started

    return {
        "untrained": untrained,
        "trained": trained,
        "bag_of_tokens": bag_of_tokens,
        "pool": pool,
        "retrieval_triplets": retrieval,
        "classification_triplets": classification,
        "triplets": triplets,
        "labels_by_doc": labels_by_doc,
        "train_report": report,
        "mining_seconds": mining_seconds,
        "train_seconds": train_seconds,
    }
