"""End-to-end orchestration of one question: interaction, tracing, marks.

answer_question never raises for run-level failures; an aborted run yields
a result carrying the partial tree and an error message so a partial trace
can still be written. Configuration problems do raise, before any backend
is touched.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, replace as dc_replace
from typing import Callable, Sequence

from .config import Ablation, EngineConfig, RunConfig
from .engine import CorrectPath, RunResult, TreeOfReasoning, run_interaction
from .errors import BackendUnavailableError, RunAbortedError, ScriptExhaustedError
from .llm import (
    RemoteChatBackend,
    ScriptedBackend,
    load_examples,
    load_script,
)
from .metrics import EfficiencyCounters
from .reader import BaselineReader, RemoteReader
from .retrieval import LocalRetriever, RemoteRetriever, build_index, load_corpus
from .tracing import FinalContent, attach_references, build_tracing_prompt
from .verify import Feedback

__all__ = ["AnswerResult", "answer_question", "build_retriever", "build_reader", "build_llm"]


@dataclass
class AnswerResult:
    """Everything one run produced; error is set when the run aborted."""

    question: str
    question_id: str | None
    gold: tuple[str, ...] | None
    run_config: RunConfig
    tree: TreeOfReasoning
    path: CorrectPath
    counters: EfficiencyCounters
    feedbacks: tuple[Feedback, ...]
    final_content: FinalContent
    prediction: str
    error: str | None = None


def build_retriever(config: EngineConfig):
    if config.retriever == "remote":
        return RemoteRetriever(config.retriever_endpoint, timeout=config.timeout)
    if Ablation.NO_IR in config.run.ablation and not config.corpus_path:
        return None
    return LocalRetriever(build_index(load_corpus(config.corpus_path)))


def build_reader(config: EngineConfig):
    if config.reader == "remote":
        return RemoteReader(config.reader_endpoint, timeout=config.timeout)
    return BaselineReader()


def build_llm(config: EngineConfig, generations: Sequence[str] | None = None):
    """One LLM backend; scripted backends are single-run and not shared."""
    if config.llm == "remote":
        return RemoteChatBackend(
            config.llm_endpoint,
            timeout=config.timeout,
            temperature=config.temperature,
            credential_env=config.credential_env,
        )
    if generations is None:
        generations = load_script(config.script_path)
    return ScriptedBackend(generations)


def _count_words(messages: Sequence[dict]) -> int:
    return sum(len(m["content"].split()) for m in messages)


def answer_question(
    question: str,
    llm,
    retriever,
    reader,
    run_config: RunConfig,
    *,
    examples: Sequence[tuple[str, str]] = (),
    multi_turn: bool = True,
    max_reference_chars: int | None = None,
    clock: Callable[[], float] = time.perf_counter,
    question_id: str | None = None,
    gold: Sequence[str] | None = None,
) -> AnswerResult:
    aborted: RunAbortedError | None = None
    try:
        result = run_interaction(
            question,
            llm,
            retriever,
            reader,
            run_config,
            examples=examples,
            multi_turn=multi_turn,
            max_reference_chars=max_reference_chars,
            clock=clock,
        )
    except RunAbortedError as exc:
        aborted = exc

    if aborted is not None:
        path = aborted.path if aborted.path is not None else CorrectPath()
        tree = aborted.tree if aborted.tree is not None else TreeOfReasoning(question)
        counters = aborted.counters if aborted.counters is not None else EfficiencyCounters()
        return AnswerResult(
            question=question,
            question_id=question_id,
            gold=tuple(gold) if gold is not None else None,
            run_config=run_config,
            tree=tree,
            path=path,
            counters=counters,
            feedbacks=tuple(aborted.feedbacks),
            final_content=attach_references("", path),
            prediction="",
            error=str(aborted),
        )

    counters = result.counters
    error = None
    if result.path.entries:
        tracing_start = clock()
        prompt = build_tracing_prompt(result.path)
        if multi_turn:
            messages = list(result.conversation) + [{"role": "user", "content": prompt}]
        else:
            messages = [{"role": "user", "content": f"[Question]: {question}\n\n{prompt}"}]
        try:
            response = llm.generate(messages)
        except (ScriptExhaustedError, BackendUnavailableError) as exc:
            final_text = _fallback_text(result.tree)
            error = f"tracing generation failed: {exc}"
        else:
            counters = dc_replace(
                counters,
                input_words=counters.input_words + _count_words(messages),
                output_words=counters.output_words + len(response.split()),
            )
            final_text = _strip_final_content_marker(response)
        counters = dc_replace(
            counters,
            wall_time_seconds=counters.wall_time_seconds + max(clock() - tracing_start, 0.0),
        )
    else:
        # Nothing verifiable was recorded; fall back to the chain's own
        # final answer so the caller still gets a best-effort prediction.
        final_text = _fallback_text(result.tree)

    content = attach_references(final_text, result.path)
    return AnswerResult(
        question=question,
        question_id=question_id,
        gold=tuple(gold) if gold is not None else None,
        run_config=run_config,
        tree=result.tree,
        path=result.path,
        counters=counters,
        feedbacks=result.feedbacks,
        final_content=content,
        prediction=final_text,
        error=error,
    )


_FINAL_CONTENT_MARKER = "[Final Content]"


def _strip_final_content_marker(text: str) -> str:
    """Drop the leading content marker the tracing prompt asks for.

    Mirrors the chain grammar's separator rule: the colon plus exactly one
    following space belong to the marker, everything after is content.
    """
    candidate = text.lstrip()
    if not candidate.startswith(_FINAL_CONTENT_MARKER):
        return text
    rest = candidate[len(_FINAL_CONTENT_MARKER):]
    if rest.startswith(":"):
        rest = rest[1:]
        if rest.startswith(" "):
            rest = rest[1:]
        return rest
    if rest == "" or rest[0].isspace():
        return rest.lstrip()
    return text


def _fallback_text(tree: TreeOfReasoning) -> str:
    for branch in reversed(tree.branches):
        if branch.chain.final_answer is not None:
            return branch.chain.final_answer
    return ""


def load_examples_if_configured(config: EngineConfig) -> list[tuple[str, str]]:
    if config.examples_path:
        return load_examples(config.examples_path)
    return []
