"""Chain-of-query reasoning with retrieval-backed verification.

The engine asks an LLM to plan a chain of sub-queries, checks each
sub-answer against retrieved documents, feeds corrections and completions
back to the LLM, and finally renders an answer whose claims are marked
with references into the corpus.
"""

from .chain import ChainOfQuery, CoqNode, ParseReport, Violation, normalize_query, parse_coq, render_coq
from .config import (
    CREDENTIAL_ENV,
    Ablation,
    EngineConfig,
    Mode,
    RunConfig,
    SourceTag,
    load_engine_config,
)
from .data import DatasetRecord, load_dataset
from .engine import (
    NO_IR_DOCUMENT,
    Branch,
    CorrectPath,
    InteractionState,
    PathEntry,
    RunResult,
    TreeOfReasoning,
    run_interaction,
    traverse,
)
from .errors import (
    BackendUnavailableError,
    ConfigError,
    DuplicateDocIdError,
    EmptyCorpusError,
    EmptyDocumentError,
    EmptyPathError,
    MalformedExampleError,
    NoMatchError,
    QueryChainError,
    RunAbortedError,
    ScriptExhaustedError,
    UnparseableGenerationError,
)
from .llm import (
    PromptBundle,
    RemoteChatBackend,
    ScriptedBackend,
    build_first_round_prompt,
    load_examples,
    load_script,
    load_script_library,
)
from .metrics import (
    EfficiencyCounters,
    SourceDistribution,
    cover_em,
    reasoning_steps,
    rouge_l,
    source_distribution,
)
from .pipeline import AnswerResult, answer_question
from .reader import BaselineReader, ReaderOutput, RemoteReader
from .report import aggregate_rows, evaluate_dataset, render_figures, write_report
from .retrieval import (
    Document,
    LexicalIndex,
    LocalRetriever,
    RemoteRetriever,
    bm25_score,
    build_index,
    load_corpus,
    retrieve_top1,
)
from .tracing import FinalContent, Reference, attach_references, build_tracing_prompt, render_final_content, skc
from .traces import TRACE_SCHEMA, build_trace_record, read_traces, row_from_trace, write_traces
from .verify import (
    COMPLETE_TEMPLATE,
    VERIFY_TEMPLATE,
    ConsistencyVerdict,
    Feedback,
    FeedbackKind,
    IrOutcome,
    check_consistency,
    ir_step,
)

__version__ = "0.1.0"

__all__ = [
    "Ablation",
    "AnswerResult",
    "BackendUnavailableError",
    "BaselineReader",
    "Branch",
    "COMPLETE_TEMPLATE",
    "CREDENTIAL_ENV",
    "ChainOfQuery",
    "ConfigError",
    "ConsistencyVerdict",
    "CoqNode",
    "CorrectPath",
    "DatasetRecord",
    "Document",
    "DuplicateDocIdError",
    "EfficiencyCounters",
    "EmptyCorpusError",
    "EmptyDocumentError",
    "EmptyPathError",
    "EngineConfig",
    "Feedback",
    "FeedbackKind",
    "FinalContent",
    "InteractionState",
    "IrOutcome",
    "LexicalIndex",
    "LocalRetriever",
    "MalformedExampleError",
    "Mode",
    "NO_IR_DOCUMENT",
    "NoMatchError",
    "ParseReport",
    "PathEntry",
    "PromptBundle",
    "QueryChainError",
    "Reference",
    "ReaderOutput",
    "RemoteChatBackend",
    "RemoteReader",
    "RemoteRetriever",
    "RunAbortedError",
    "RunConfig",
    "RunResult",
    "ScriptExhaustedError",
    "ScriptedBackend",
    "SourceDistribution",
    "SourceTag",
    "TRACE_SCHEMA",
    "TreeOfReasoning",
    "UnparseableGenerationError",
    "VERIFY_TEMPLATE",
    "Violation",
    "aggregate_rows",
    "answer_question",
    "attach_references",
    "bm25_score",
    "build_first_round_prompt",
    "build_index",
    "build_trace_record",
    "build_tracing_prompt",
    "check_consistency",
    "cover_em",
    "evaluate_dataset",
    "ir_step",
    "load_corpus",
    "load_dataset",
    "load_engine_config",
    "load_examples",
    "load_script",
    "load_script_library",
    "normalize_query",
    "parse_coq",
    "read_traces",
    "reasoning_steps",
    "render_figures",
    "render_final_content",
    "render_coq",
    "retrieve_top1",
    "rouge_l",
    "row_from_trace",
    "run_interaction",
    "skc",
    "source_distribution",
    "traverse",
    "write_report",
    "write_traces",
]
