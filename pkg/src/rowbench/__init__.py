"""rowbench: benchmark construction and evaluation for tabular embeddings.

Turns raw tables into serialized documents, verified retrieval queries and
contrastive training triplets; trains a desk-scale numeric-aware embedder;
and scores any embedder on retrieval, classification and robustness analyses.
"""

__version__ = "0.1.0"

from .analysis import (
    ClusterStats,
    NoiseColumn,
    NoisePlan,
    SensitivityCase,
    SensitivityResult,
    cluster_ratio,
    make_grid,
    noise_robustness,
    numeric_sensitivity,
    spearman,
    template_robustness,
)
from .embedders import (
    HashedProjectionEmbedder,
    RemoteEmbedder,
    RemoteEmbedderConfig,
    cosine,
    embed_texts,
    exact_search,
)
from .errors import (
    AnalysisError,
    ArtifactError,
    ConfigError,
    CorpusError,
    EmbedError,
    EvalError,
    QueryError,
    RowbenchError,
    SchemaError,
    SerializationError,
    TargetError,
    TrainError,
)
from .evaluation import (
    ClassificationDataset,
    ClassificationReport,
    OverallReport,
    RetrievalReport,
    eval_classification,
    eval_retrieval,
    macro_f1_score,
    mrr_at_k,
    ndcg_at_k,
    overall,
    overall_score,
    stratified_split,
    train_probe,
)
from .mining import (
    EmbeddedPool,
    MiningConfig,
    Triplet,
    build_classification_triplets,
    build_retrieval_triplets,
    mine_hard_negatives,
    mix_dataset,
)
from .queries import (
    Constraint,
    Query,
    generate_query,
    generate_verified_queries,
    make_class_query,
    render_query,
    satisfies,
    verify_query,
)
from .tables import (
    CellValue,
    ColumnMeta,
    Corpus,
    Document,
    Table,
    build_corpus,
    infer_schema,
    normalize_value,
    serialize_row,
)
from .targets import (
    LabeledExample,
    TargetSpec,
    candidate_targets,
    choose_target,
    discretize,
    make_labeled_examples,
)
from .training import TrainConfig, TrainReport, assemble_batch, info_nce_loss, train
