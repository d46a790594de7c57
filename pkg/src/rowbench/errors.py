"""Exception types shared across the toolkit."""


class RowbenchError(Exception):
    """Base class for all toolkit errors."""


class SchemaError(RowbenchError):
    """Malformed table structure: ragged rows, duplicate or empty headers."""


class CorpusError(RowbenchError):
    """Corpus construction produced no usable documents."""


class SerializationError(RowbenchError):
    """Row serialization was asked to emit an empty document."""


class TargetError(RowbenchError):
    """No usable prediction target, or a degenerate discretization."""


class QueryError(RowbenchError):
    """Invalid query construction arguments."""


class EmbedError(RowbenchError):
    """Embedding failed or violated the embedder contract."""


class TrainError(RowbenchError):
    """Training aborted (non-finite loss, bad similarity input)."""


class EvalError(RowbenchError):
    """Evaluation could not produce a report."""


class AnalysisError(RowbenchError):
    """Analysis preconditions violated (degenerate clusters, bad grids)."""


class ConfigError(RowbenchError):
    """Run configuration failed validation.

    Carries the full list of messages so the CLI can print them all at once.
    """

    def __init__(self, messages: list[str] | str):
        if isinstance(messages, str):
            messages = [messages]
        self.messages = messages
        super().__init__("; ".join(messages))


class ArtifactError(RowbenchError):
    """A pipeline stage is missing an upstream artifact."""

    def __init__(self, path):
        self.path = str(path)
        super().__init__(f"missing upstream artifact: {self.path}")
