"""Command-line pipeline: ingest, build-bench, mine, train, eval, analyze, report.

Each command reads its predecessors' artifacts from the run directory
(output_dir/<config hash>), writes its own, and prints a one-line summary.
Exit codes: 0 success, 1 internal error, 2 config/missing-artifact problems.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    NoiseColumn,
    NoisePlan,
    SensitivityCase,
    cases_from_queries,
    cluster_ratio,
    make_grid,
    noise_robustness,
    numeric_sensitivity,
    template_robustness,
)
from .config import RunConfig, validate_config
from .embedders import (
    HashedProjectionEmbedder,
    RemoteEmbedder,
    RemoteEmbedderConfig,
    embed_texts,
    read_doc_ids,
    read_matrix,
    write_doc_ids,
    write_matrix,
)
from .errors import ArtifactError, ConfigError, RowbenchError, TargetError
from .evaluation import (
    ClassificationDataset,
    eval_classification,
    eval_retrieval,
    overall,
)
from .mining import (
    EmbeddedPool,
    MiningConfig,
    build_classification_triplets,
    build_retrieval_triplets,
    mix_dataset,
    read_resolved_triplets,
    write_resolved_triplets,
    write_triplets,
)
from .queries import (
    QTYPE_CATEGORICAL,
    QTYPE_MIXED,
    QTYPE_NUMERIC,
    feasible_cells,
    generate_verified_queries,
    read_qrels,
    read_queries,
    spread_counts,
    write_qrels,
    write_queries,
)
from .tables import (
    KIND_NUMBER,
    build_corpus,
    infer_schema,
    normalize_value,
    read_corpus,
    read_delimited,
    read_tables,
    write_corpus,
    write_tables,
)
from .targets import (
    CATEGORICAL,
    DISCRETIZED_NUMERIC,
    TargetSpec,
    candidate_targets,
    choose_target,
    make_labeled_examples,
)
from .training import TrainConfig, train
from .util import read_jsonl, write_jsonl

logger = logging.getLogger(__name__)

TABLES = "tables.jsonl"
CORPUS = "corpus.jsonl"
QUERIES = "queries.jsonl"
QRELS = "qrels.tsv"
TARGETS = "targets.json"
LABELED = "labeled.jsonl"
TRIPLETS = "triplets.jsonl"
TRIPLETS_RESOLVED = "triplets_resolved.jsonl"
CHECKPOINT = "checkpoint.bin"
TRAIN_REPORT = "train_report.json"
EVAL_RETRIEVAL = "eval_retrieval.json"
EVAL_CLASSIFICATION = "eval_classification.json"
EVAL_OVERALL = "eval_overall.json"
CORPUS_EMBEDDINGS = "corpus_embeddings.bin"
CORPUS_EMBEDDING_IDS = "corpus_embeddings.ids.json"
ANALYSIS_SENSITIVITY = "analysis_sensitivity.json"
ANALYSIS_NOISE = "analysis_noise.json"
ANALYSIS_TEMPLATES = "analysis_templates.json"
ANALYSIS_CLUSTER = "analysis_cluster.json"
REPORT_TXT = "report.txt"
REPORT_JSON = "report.json"

COMMANDS = ("ingest", "build-bench", "mine", "train", "eval", "analyze", "report")


def _require(path: Path) -> Path:
    if not path.exists():
        raise ArtifactError(path)
    return path


def _write_json(path: Path, payload: dict, config: RunConfig, artifact: str) -> None:
    payload = {"_meta": config.artifact_header(artifact), **payload}
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _read_json(path: Path) -> dict:
    return json.loads(path.read_text(encoding="utf-8"))


def make_desk_embedder(config: RunConfig, bag_of_tokens: bool = False) -> HashedProjectionEmbedder:
    section = config["embedder"]
    if bag_of_tokens or section["grid_points"] == 0:
        grid: list[float] = []
    else:
        grid = np.linspace(
            section["grid_low"], section["grid_high"], section["grid_points"]
        ).tolist()
    return HashedProjectionEmbedder(
        feature_dim=section["feature_dim"],
        output_dim=section["output_dim"],
        hash_seed=section["hash_seed"],
        threshold_grid=grid,
        grid_width=section["grid_width"],
        init_seed=config.seed,
    )


def make_embedder(config: RunConfig):
    section = config["embedder"]
    if section["kind"] == "remote":
        remote = section["remote"]
        return RemoteEmbedder(
            RemoteEmbedderConfig(
                endpoint=remote["endpoint"],
                model=remote["model"],
                batch_size=remote["batch_size"],
                timeout=remote["timeout"],
                retries=remote["retries"],
                expected_dim=remote["expected_dim"],
                api_key=os.environ.get("ROWBENCH_REMOTE_API_KEY"),
            )
        )
    return make_desk_embedder(config)


def load_eval_embedder(config: RunConfig, run_dir: Path, untrained: bool = False):
    """Trained checkpoint when present, otherwise the configured embedder."""
    checkpoint = run_dir / CHECKPOINT
    if config["embedder"]["kind"] == "desk" and checkpoint.exists() and not untrained:
        return HashedProjectionEmbedder.load(checkpoint), "desk-trained"
    embedder = make_embedder(config)
    if isinstance(embedder, RemoteEmbedder):
        return embedder, f"remote:{config['embedder']['remote']['model']}"
    return embedder, "desk-untrained"


# -- commands ---------------------------------------------------------------


def cmd_ingest(config: RunConfig) -> str:
    run_dir = config.run_dir
    run_dir.mkdir(parents=True, exist_ok=True)
    tables = []
    seen = set()
    for input_path in config["inputs"]:
        path = Path(input_path)
        if not path.exists():
            raise ArtifactError(path)
        dataset_id = path.stem
        if dataset_id in seen:
            raise ConfigError(f"duplicate dataset id {dataset_id!r} among inputs")
        seen.add(dataset_id)
        records = read_delimited(path, config["delimiter"])
        tables.append(infer_schema(records, dataset_id=dataset_id))
    write_tables(run_dir / TABLES, tables, header=config.artifact_header("tables"))
    rows = sum(len(t.rows) for t in tables)
    return f"ingest: {len(tables)} datasets, {rows} rows -> {run_dir / TABLES}"


def cmd_build_bench(config: RunConfig) -> str:
    run_dir = config.run_dir
    tables = read_tables(_require(run_dir / TABLES))
    tables_by_id = {t.dataset_id: t for t in tables}

    corpus = build_corpus(
        tables,
        cap=config["corpus"]["cap"],
        max_words=config["corpus"]["max_words"],
        seed=config.seed,
    )
    write_corpus(run_dir / CORPUS, corpus, tables_by_id, header=config.artifact_header("corpus"))

    targets: dict[str, TargetSpec] = {}
    labeled_records = []
    for table in tables:
        try:
            candidates = candidate_targets(table)
            spec = choose_target(
                candidates,
                table,
                p=config["targets"]["categorical_probability"],
                seed=config.seed,
            )
        except TargetError as exc:
            logger.warning("skipping dataset %s: %s", table.dataset_id, exc)
            continue
        targets[table.dataset_id] = spec
        for example in make_labeled_examples(table, spec):
            labeled_records.append(
                {
                    "doc_id": example.doc_id,
                    "dataset_id": example.dataset_id,
                    "text": example.text,
                    "label": example.label,
                }
            )
    _write_json(
        run_dir / TARGETS,
        {
            "targets": {
                dataset_id: {
                    "column": spec.column,
                    "kind": spec.kind,
                    "boundaries": list(spec.boundaries) if spec.boundaries else None,
                    "descriptors": list(spec.descriptors),
                }
                for dataset_id, spec in targets.items()
            }
        },
        config,
        "targets",
    )
    write_jsonl(run_dir / LABELED, labeled_records, header=config.artifact_header("labeled"))

    counts = _query_counts(config)
    queries, qrels, rejected = generate_verified_queries(
        corpus,
        tables_by_id,
        counts,
        seed=config.seed,
        template=config["queries"]["template"],
        min_matches=config["queries"]["min_matches"],
        attempt_factor=config["queries"]["attempt_factor"],
    )
    write_queries(run_dir / QUERIES, queries, header=config.artifact_header("queries"))
    header_line = (
        f"rowbench qrels tool_version={__version__} "
        f"config_hash={config.config_hash} seed={config.seed}"
    )
    pairs = write_qrels(run_dir / QRELS, qrels, header_line=header_line)
    return (
        f"build-bench: {len(corpus)} documents, {len(queries)} queries "
        f"({rejected} rejected), {pairs} qrel pairs, {len(labeled_records)} labeled examples"
    )


def _query_counts(config: RunConfig) -> dict[tuple[str, int], int]:
    per_cell = config["queries"]["per_cell"]
    if per_cell:
        counts = {}
        for key, value in per_cell.items():
            qtype, k = key.split("/")
            counts[(qtype, int(k))] = value
        return counts
    return spread_counts(config["queries"]["total"], feasible_cells())


def _load_targets(run_dir: Path) -> dict[str, TargetSpec]:
    payload = _read_json(_require(run_dir / TARGETS))
    targets = {}
    for dataset_id, record in payload["targets"].items():
        boundaries = record["boundaries"]
        targets[dataset_id] = TargetSpec(
            column=record["column"],
            kind=record["kind"],
            descriptors=tuple(record["descriptors"]),
            boundaries=tuple(boundaries) if boundaries else None,
        )
    return targets


def cmd_mine(config: RunConfig) -> str:
    run_dir = config.run_dir
    tables = read_tables(_require(run_dir / TABLES))
    tables_by_id = {t.dataset_id: t for t in tables}
    corpus = read_corpus(_require(run_dir / CORPUS), cap=config["corpus"]["cap"])
    queries = read_queries(_require(run_dir / QUERIES))
    qrels = read_qrels(_require(run_dir / QRELS))
    targets = _load_targets(run_dir)
    labeled = list(read_jsonl(_require(run_dir / LABELED)))

    retriever = make_embedder(config)
    mining_cfg = MiningConfig(
        top_k=config["mining"]["top_k"],
        negatives=config["mining"]["negatives"],
        retriever=retriever,
    )
    pool = EmbeddedPool.build(corpus.documents, retriever)
    retrieval = build_retrieval_triplets(queries, qrels, corpus, tables_by_id, mining_cfg, pool=pool)

    from .targets import LabeledExample

    classification = []
    by_dataset: dict[str, list[LabeledExample]] = {}
    for record in labeled:
        example = LabeledExample(
            text=record["text"],
            label=record["label"],
            dataset_id=record["dataset_id"],
            doc_id=record["doc_id"],
        )
        by_dataset.setdefault(example.dataset_id, []).append(example)
    for dataset_id in sorted(by_dataset):
        classification.extend(
            build_classification_triplets(
                by_dataset[dataset_id],
                targets[dataset_id],
                mining_cfg,
                max_triplets=config["targets"]["max_examples_per_dataset"],
                seed=config.seed,
            )
        )

    mixed = mix_dataset(
        retrieval,
        classification,
        ratio=(config["mix"]["retrieval"], config["mix"]["classification"]),
        seed=config.seed,
    )
    write_triplets(run_dir / TRIPLETS, mixed, header=config.artifact_header("triplets"))
    write_resolved_triplets(
        run_dir / TRIPLETS_RESOLVED, mixed, header=config.artifact_header("triplets_resolved")
    )
    return (
        f"mine: {len(retrieval)} retrieval + {len(classification)} classification "
        f"triplets -> {len(mixed)} mixed"
    )


def cmd_train(config: RunConfig) -> str:
    if config["embedder"]["kind"] != "desk":
        raise ConfigError("only the desk embedder is trainable")
    run_dir = config.run_dir
    triplets = read_resolved_triplets(_require(run_dir / TRIPLETS_RESOLVED))
    embedder = make_desk_embedder(config)
    section = config["train"]
    train_cfg = TrainConfig(
        temperature=section["temperature"],
        batch_size=section["batch_size"],
        epochs=section["epochs"],
        learning_rate=section["learning_rate"],
        momentum=section["momentum"],
        gradient_clip=section["gradient_clip"],
        negatives_per_query=section["negatives_per_query"],
        seed=config.seed,
    )
    report = train(triplets, embedder, train_cfg)
    embedder.save(run_dir / CHECKPOINT)
    _write_json(run_dir / TRAIN_REPORT, {"report": report.to_dict()}, config, "train_report")
    return (
        f"train: {report.steps} steps over {report.epochs} epochs, "
        f"final mean loss {report.final_mean_loss:.4f}"
    )


def cmd_eval(config: RunConfig, untrained: bool = False) -> str:
    run_dir = config.run_dir
    corpus = read_corpus(_require(run_dir / CORPUS), cap=config["corpus"]["cap"])
    queries = read_queries(_require(run_dir / QUERIES))
    qrels = read_qrels(_require(run_dir / QRELS))
    labeled = list(read_jsonl(_require(run_dir / LABELED)))
    embedder, embedder_name = load_eval_embedder(config, run_dir, untrained=untrained)

    corpus_embeddings = _corpus_embeddings(config, run_dir, corpus, embedder)
    retrieval = eval_retrieval(embedder, corpus, queries, qrels, corpus_embeddings=corpus_embeddings)

    datasets = []
    by_dataset: dict[str, list[dict]] = {}
    for record in labeled:
        by_dataset.setdefault(record["dataset_id"], []).append(record)
    for dataset_id in sorted(by_dataset):
        records = by_dataset[dataset_id]
        vectors = embed_texts([r["text"] for r in records], embedder)
        datasets.append(
            ClassificationDataset(
                dataset_id=dataset_id,
                embeddings=vectors,
                labels=[r["label"] for r in records],
            )
        )
    classification = eval_classification(datasets)
    summary = overall(classification, retrieval)

    _write_json(
        run_dir / EVAL_RETRIEVAL,
        {"embedder": embedder_name, "report": retrieval.to_dict()},
        config,
        "eval_retrieval",
    )
    _write_json(
        run_dir / EVAL_CLASSIFICATION,
        {"embedder": embedder_name, "report": classification.to_dict()},
        config,
        "eval_classification",
    )
    _write_json(
        run_dir / EVAL_OVERALL,
        {"embedder": embedder_name, "report": summary.to_dict()},
        config,
        "eval_overall",
    )
    return (
        f"eval[{embedder_name}]: accuracy {classification.accuracy:.4f}, "
        f"macro-F1 {classification.macro_f1:.4f}, MRR@10 {retrieval.mrr_at_10:.4f}, "
        f"nDCG@10 {retrieval.ndcg_at_10:.4f}, overall {summary.overall:.4f}"
    )


def _corpus_embeddings(config: RunConfig, run_dir: Path, corpus, embedder) -> np.ndarray:
    """Embed the corpus, reusing the persisted matrix when it matches."""
    matrix_path = run_dir / CORPUS_EMBEDDINGS
    ids_path = run_dir / CORPUS_EMBEDDING_IDS
    checksum = embedder.checksum() if hasattr(embedder, "checksum") else None
    doc_ids = [d.doc_id for d in corpus.documents]
    if checksum and matrix_path.exists() and ids_path.exists():
        stored_ids, meta = read_doc_ids(ids_path)
        if meta.get("embedder_checksum") == checksum and stored_ids == doc_ids:
            return read_matrix(matrix_path).astype(np.float64)
    vectors = embed_texts([d.text for d in corpus.documents], embedder)
    if checksum:
        write_matrix(matrix_path, vectors)
        write_doc_ids(
            ids_path,
            doc_ids,
            meta={**config.artifact_header("corpus_embeddings"), "embedder_checksum": checksum},
        )
    return vectors


def _derive_sensitivity_cases(config: RunConfig, queries, corpus, tables_by_id) -> list[SensitivityCase]:
    declared = config["analysis"]["sensitivity"]
    if declared != "auto":
        cases = []
        for i, case in enumerate(declared):
            cases.append(
                SensitivityCase(
                    case_id=case.get("id", f"case{i:02d}"),
                    column=case["column"],
                    op=case["op"],
                    thresholds=tuple(case["thresholds"]),
                    grid=make_grid(case["grid_low"], case["grid_high"]),
                    context_clauses=tuple(case.get("context", [])),
                )
            )
        return cases
    return cases_from_queries(
        queries, corpus, tables_by_id, limit=config["analysis"]["sensitivity_count"]
    )


def _noise_pool(tables, constrained: set[str], per_column_values: int = 40) -> list[NoiseColumn]:
    pool = []
    seen_names: set[str] = set()
    for table in sorted(tables, key=lambda t: t.dataset_id):
        for j, col in enumerate(table.columns):
            if col.name in constrained or col.name in seen_names:
                continue
            values = sorted(
                {normalize_value(row[j]) for row in table.rows if not row[j].is_missing()}
            )
            if not values:
                continue
            seen_names.add(col.name)
            pool.append(
                NoiseColumn(
                    name=col.name,
                    values=tuple(values[:per_column_values]),
                    source_dataset=table.dataset_id,
                )
            )
    return pool


def cmd_analyze(config: RunConfig) -> str:
    run_dir = config.run_dir
    tables = read_tables(_require(run_dir / TABLES))
    tables_by_id = {t.dataset_id: t for t in tables}
    corpus = read_corpus(_require(run_dir / CORPUS), cap=config["corpus"]["cap"])
    queries = read_queries(_require(run_dir / QUERIES))
    qrels = read_qrels(_require(run_dir / QRELS))
    labeled = list(read_jsonl(_require(run_dir / LABELED)))

    embedders = {}
    if (run_dir / CHECKPOINT).exists():
        embedders["desk-trained"] = HashedProjectionEmbedder.load(run_dir / CHECKPOINT)
    embedders["desk-untrained"] = make_desk_embedder(config)
    embedders["bag-of-tokens"] = make_desk_embedder(config, bag_of_tokens=True)

    # numeric sensitivity, all embedders on the same cases
    cases = _derive_sensitivity_cases(config, queries, corpus, tables_by_id)
    sensitivity: dict[str, list[dict]] = {}
    for name, embedder in embedders.items():
        sensitivity[name] = [numeric_sensitivity(embedder, case).to_dict() for case in cases]
    _write_json(
        run_dir / ANALYSIS_SENSITIVITY,
        {
            "cases": [case.case_id for case in cases],
            "results": sensitivity,
            "mean_rho": {
                name: float(np.mean([r["rho"] for r in results])) if results else 0.0
                for name, results in sensitivity.items()
            },
        },
        config,
        "analysis_sensitivity",
    )
    baseline_name = "desk-untrained"
    model_name = "desk-trained" if "desk-trained" in embedders else baseline_name
    with open(run_dir / "analysis_sensitivity.tsv", "w", encoding="utf-8") as fh:
        fh.write("case\tbaseline_rho\tmodel_rho\n")
        for i, case in enumerate(cases):
            fh.write(
                f"{case.case_id}\t{sensitivity[baseline_name][i]['rho']:.6f}"
                f"\t{sensitivity[model_name][i]['rho']:.6f}\n"
            )

    # noise robustness for both desk embedders
    constrained = {c.column for q in queries for c in q.constraints}
    plan = NoisePlan(
        pool=_noise_pool(tables, constrained),
        levels=tuple(config["analysis"]["noise_levels"]),
        base_columns=config["analysis"]["noise_base_columns"],
    )
    noise: dict[str, dict] = {}
    for name in [n for n in ("desk-trained", "desk-untrained") if n in embedders]:
        noise[name] = noise_robustness(
            embedders[name], corpus, queries, qrels, plan, seed=config.seed
        ).to_dict()
    _write_json(run_dir / ANALYSIS_NOISE, {"results": noise}, config, "analysis_noise")
    with open(run_dir / "analysis_noise.tsv", "w", encoding="utf-8") as fh:
        fh.write("embedder\tlevel\tmrr_at_10\tdelta\n")
        for name, result in sorted(noise.items()):
            for level, value in sorted(result["mrr_by_level"].items(), key=lambda kv: int(kv[0])):
                fh.write(f"{name}\t{level}\t{value:.6f}\t{result['delta_by_level'][level]:.6f}\n")

    # template robustness on a spread of verified intents
    intents = _pick_intents(queries, config["analysis"]["template_intents"])
    robustness = template_robustness(
        embedders[model_name],
        [(q.qid, q.constraints) for q in intents],
        corpus,
        {q.qid: qrels[q.qid] for q in intents},
        templates=tuple(config["analysis"]["templates"]),
    )
    _write_json(
        run_dir / ANALYSIS_TEMPLATES,
        {"embedder": model_name, "report": robustness.to_dict()},
        config,
        "analysis_templates",
    )
    with open(run_dir / "analysis_templates.tsv", "w", encoding="utf-8") as fh:
        fh.write("template\tmrr_at_10\tndcg_at_10\n")
        for template, report in sorted(
            robustness.per_template.items(), key=lambda kv: int(kv[0][1:])
        ):
            fh.write(f"{template}\t{report.mrr_at_10:.6f}\t{report.ndcg_at_10:.6f}\n")

    # cluster separation on target-masked documents
    by_dataset: dict[str, list[dict]] = {}
    for record in labeled:
        by_dataset.setdefault(record["dataset_id"], []).append(record)
    cluster: dict[str, dict] = {}
    for dataset_id in sorted(by_dataset)[: config["analysis"]["cluster_datasets"]]:
        records = by_dataset[dataset_id]
        labels = [r["label"] for r in records]
        if len(set(labels)) < 2:
            continue
        vectors = embed_texts([r["text"] for r in records], embedders[model_name])
        cluster[dataset_id] = cluster_ratio(vectors, labels).to_dict()
    _write_json(
        run_dir / ANALYSIS_CLUSTER,
        {"embedder": model_name, "results": cluster},
        config,
        "analysis_cluster",
    )
    return (
        f"analyze: {len(cases)} sensitivity cases, {len(plan.levels)} noise levels, "
        f"{len(robustness.per_template)} templates, {len(cluster)} cluster datasets"
    )


def _pick_intents(queries, want: int):
    """Round-robin across query types so intents span the benchmark."""
    by_type: dict[str, list] = {QTYPE_CATEGORICAL: [], QTYPE_NUMERIC: [], QTYPE_MIXED: []}
    for query in sorted(queries, key=lambda q: q.qid):
        by_type.setdefault(query.qtype, []).append(query)
    picked = []
    index = 0
    while len(picked) < want:
        progressed = False
        for qtype in (QTYPE_CATEGORICAL, QTYPE_NUMERIC, QTYPE_MIXED):
            pool = by_type[qtype]
            if index < len(pool):
                picked.append(pool[index])
                progressed = True
                if len(picked) >= want:
                    break
        if not progressed:
            break
        index += 1
    return picked


def cmd_report(config: RunConfig) -> str:
    run_dir = config.run_dir
    overall_payload = _read_json(_require(run_dir / EVAL_OVERALL))
    retrieval_payload = _read_json(_require(run_dir / EVAL_RETRIEVAL))
    classification_payload = _read_json(_require(run_dir / EVAL_CLASSIFICATION))

    merged: dict = {
        "embedder": overall_payload["embedder"],
        "overall": overall_payload["report"],
        "retrieval": retrieval_payload["report"],
        "classification": classification_payload["report"],
    }
    for name, filename in (
        ("sensitivity", ANALYSIS_SENSITIVITY),
        ("noise", ANALYSIS_NOISE),
        ("templates", ANALYSIS_TEMPLATES),
        ("cluster", ANALYSIS_CLUSTER),
    ):
        path = run_dir / filename
        if path.exists():
            payload = _read_json(path)
            payload.pop("_meta", None)
            merged[name] = payload

    lines = []
    header = f"{'Embedder':<28}{'Accuracy':>10}{'F1':>9}{'MRR@10':>9}{'nDCG@10':>9}{'Overall':>9}"
    lines.append(header)
    lines.append("-" * len(header))
    report = merged["overall"]
    lines.append(
        f"{merged['embedder']:<28}"
        f"{100 * report['accuracy']:>10.2f}"
        f"{100 * report['macro_f1']:>9.2f}"
        f"{100 * report['mrr_at_10']:>9.2f}"
        f"{100 * report['ndcg_at_10']:>9.2f}"
        f"{100 * report['overall']:>9.2f}"
    )
    lines.append("")
    lines.append("nDCG@10 by query type and constraint count:")
    for cell, value in sorted(merged["retrieval"]["breakdown"].items()):
        count = merged["retrieval"]["breakdown_counts"][cell]
        lines.append(f"  {cell:<16}{100 * value:>8.2f}   ({count} queries)")
    if "sensitivity" in merged:
        lines.append("")
        lines.append("Numeric sensitivity (mean Spearman rho):")
        for name, value in sorted(merged["sensitivity"]["mean_rho"].items()):
            lines.append(f"  {name:<20}{value:>8.4f}")
    if "noise" in merged:
        lines.append("")
        lines.append("Noise robustness (MRR@10 by injected columns):")
        for name, result in sorted(merged["noise"]["results"].items()):
            curve = ", ".join(
                f"{level}:{100 * value:.2f}"
                for level, value in sorted(result["mrr_by_level"].items(), key=lambda kv: int(kv[0]))
            )
            lines.append(f"  {name:<20}{curve}")
    text = "\n".join(lines) + "\n"
    (run_dir / REPORT_TXT).write_text(text, encoding="utf-8")
    _write_json(run_dir / REPORT_JSON, merged, config, "report")
    return f"report: wrote {run_dir / REPORT_TXT} and {run_dir / REPORT_JSON}"


def run_command(name: str, config: RunConfig, untrained: bool = False) -> str:
    config.run_dir.mkdir(parents=True, exist_ok=True)
    if name == "ingest":
        return cmd_ingest(config)
    if name == "build-bench":
        return cmd_build_bench(config)
    if name == "mine":
        return cmd_mine(config)
    if name == "train":
        return cmd_train(config)
    if name == "eval":
        return cmd_eval(config, untrained=untrained)
    if name == "analyze":
        return cmd_analyze(config)
    if name == "report":
        return cmd_report(config)
    raise ConfigError(f"unknown command {name!r}")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rowbench",
        description="Benchmark construction, training and evaluation for tabular embeddings.",
    )
    parser.add_argument("--version", action="version", version=f"rowbench {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub = subparsers.add_parser(name)
        sub.add_argument("--config", required=True, help="path to the run config JSON")
        sub.add_argument("--seed", type=int, default=None, help="override the config seed")
        sub.add_argument("--threads", type=int, default=None, help="parallelism hint")
        if name == "eval":
            sub.add_argument(
                "--untrained",
                action="store_true",
                help="ignore any checkpoint and evaluate the untrained embedder",
            )
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.threads is not None:
        overrides["threads"] = args.threads
    try:
        config = validate_config(args.config, overrides=overrides)
        summary = run_command(args.command, config, untrained=getattr(args, "untrained", False))
    except ConfigError as exc:
        for message in exc.messages:
            print(f"config error: {message}", file=sys.stderr)
        return 2
    except ArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RowbenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(summary)
    return 0


if __name__ == "__main__":
    sys.exit(main())
