"""Dynamic temporal fact benchmarks for masked language models.

The package turns a Wikidata entity dump into time-bucketed cloze test sets,
labels every query at each bucket transition (unchanged / updated / new /
deleted), and evaluates masked-LM backends through three views: single-token
probing, sequential multi-token generation, and pseudo-log-likelihood
scoring. Backends are reached over a small JSON-over-HTTP protocol; a
deterministic mock backend keeps the whole pipeline runnable offline.
"""

__version__ = "0.1.0"

from .bridge import (
    BackendDescriptor,
    BridgeClient,
    FillMaskRequest,
    FixtureTokenizer,
    MaskDistribution,
    MockBackend,
    ResponseCache,
    mock_backend,
)
from .errors import (
    ConfigError,
    ContractError,
    DriftprobeError,
    FixtureError,
    IngestError,
    ProtocolError,
    RenderError,
    StageError,
    TransportError,
)
from .ingest import (
    EntityRecord,
    FactRecord,
    IngestStats,
    RelationConfig,
    TimeInterval,
    extract_temporal_statements,
    ingest_dump,
    load_relations_csv,
    parse_dump_stream,
    read_fact_tsv,
    select_top_subjects,
    write_fact_tsv,
)
from .metrics import (
    SplitReport,
    aggregate,
    mrr,
    precision_at_k,
    rouge_l,
    rouge_n,
    token_f1,
)
from .pipeline import PipelineConfig, PipelineRun, RunManifest, run_pipeline
from .probing import (
    DecodePolicy,
    EvaluationRecord,
    GenerationCandidate,
    PLLResult,
    evaluate_mlm_score,
    evaluate_multi_token,
    generate_multi_token,
    match_candidates,
    probe_single_token,
    score_pll,
)
from .reports import ResultTable, emit_model_by_bucket_table, emit_window_view
from .snapshots import (
    Answer,
    Granularity,
    QueryKey,
    SnapshotQuery,
    TimeBucket,
    bucketize,
    build_snapshot,
    parse_bucket_id,
)
from .splits import (
    FineGrainedLabel,
    SplitAssignment,
    assign_splits,
    diff_buckets,
    split_counts,
)
from .templates import (
    ClozeQuery,
    Template,
    TokenizerHandle,
    filter_max_tokens,
    filter_single_token,
    normalize_answer,
    render_query,
    tokenize_answers,
)
