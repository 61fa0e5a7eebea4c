"""The interaction loop: tree-of-reasoning, traversal, and the round engine.

One run alternates LLM generations with IR feedback. Each generation is
parsed into a chain and appended as a branch; traversal walks the chain in
order, skipping queries whose normalized form was already processed, and
stops at the first node needing correction or completion. The loop ends
when a traversal finishes cleanly or the round counter passes r_max, so at
most r_max + 1 generations occur.

A failed node does not send the search back to its parent: the next branch
is generated from the feedback about that node (node identification), and
the processed set M never resets, so no query is examined twice.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

from .chain import ChainOfQuery, CoqNode, normalize_query, parse_coq
from .config import Ablation, Mode, RunConfig, SourceTag
from .errors import (
    BackendUnavailableError,
    RunAbortedError,
    ScriptExhaustedError,
    UnparseableGenerationError,
)
from .llm import (
    FIRST_ROUND_INSTRUCTION,
    LONG_FORM_SUPPLEMENT,
    PromptBundle,
    build_feedback_round_prompt,
    build_first_round_prompt,
)
from .metrics import EfficiencyCounters
from .retrieval import Document
from .verify import Feedback, FeedbackKind, IrOutcome, ir_step

__all__ = [
    "Branch",
    "TreeOfReasoning",
    "CorrectPath",
    "PathEntry",
    "InteractionState",
    "RunResult",
    "NO_IR_DOCUMENT",
    "duplicate_query",
    "record_correct",
    "traverse",
    "run_interaction",
]

logger = logging.getLogger(__name__)

# Placeholder supporting document for the retrieval-free ablation, shared by
# every path entry of such runs.
NO_IR_DOCUMENT = Document(
    id="__no_ir__",
    title="(no retrieval)",
    text="(no supporting document; retrieval was disabled for this run)",
)


@dataclass(frozen=True)
class Branch:
    """One round's chain; restart_query names the node that triggered it."""

    round: int
    chain: ChainOfQuery
    restart_query: str | None = None


@dataclass
class TreeOfReasoning:
    root_question: str
    branches: list[Branch] = field(default_factory=list)


@dataclass(frozen=True)
class PathEntry:
    query: str
    answer: str
    document: Document
    source: SourceTag


@dataclass(frozen=True)
class CorrectPath:
    """Verified and completed nodes with their supporting documents.

    At most one entry per normalized query; re-recording a query replaces
    the entry in place, keeping first-insertion order.
    """

    entries: tuple[PathEntry, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))


def record_correct(
    path: CorrectPath, query: str, answer: str, doc: Document, source: SourceTag
) -> CorrectPath:
    """Append the entry, or replace the one sharing its normalized query."""
    entry = PathEntry(query=query, answer=answer, document=doc, source=source)
    key = normalize_query(query)
    entries = list(path.entries)
    for i, existing in enumerate(entries):
        if normalize_query(existing.query) == key:
            entries[i] = entry
            return CorrectPath(tuple(entries))
    entries.append(entry)
    return CorrectPath(tuple(entries))


@dataclass
class InteractionState:
    """Mutable per-run state: M, R, the round counter, and the last feedback.

    processed only grows; rounds_used counts generations and stays at or
    below r_max when checked as the loop guard (the final increment may
    leave it at r_max + 1, which is what ends the run).
    """

    processed: set[str] = field(default_factory=set)
    correct_path: CorrectPath = field(default_factory=CorrectPath)
    rounds_used: int = 0
    last_feedback: Feedback | None = None


def duplicate_query(q: str, processed: set[str]) -> bool:
    """Has this query, up to normalization, been processed already?"""
    return normalize_query(q) in processed


def traverse(
    chain: ChainOfQuery,
    state: InteractionState,
    ir: Callable[[CoqNode], IrOutcome],
) -> Feedback:
    """Walk the chain in order and return the first non-pass feedback.

    Every unprocessed node goes through one IR step and is then marked
    processed. Nodes recorded by the step land in the correct path. Pass
    and failed-retrieval outcomes continue the walk; correction and
    completion return immediately; a clean walk finishes the run.
    """
    for node in chain.nodes:
        if duplicate_query(node.query, state.processed):
            continue
        outcome = ir(node)
        state.processed.add(normalize_query(node.query))
        state.last_feedback = outcome.feedback
        if outcome.source is not None:
            state.correct_path = record_correct(
                state.correct_path,
                outcome.query,
                outcome.answer,
                outcome.document,
                outcome.source,
            )
        if outcome.feedback.kind in (FeedbackKind.CORRECT, FeedbackKind.COMPLETE):
            return outcome.feedback
    finish = Feedback(kind=FeedbackKind.FINISH)
    state.last_feedback = finish
    return finish


@dataclass(frozen=True)
class RunResult:
    question: str
    tree: TreeOfReasoning
    path: CorrectPath
    counters: EfficiencyCounters
    feedbacks: tuple[Feedback, ...]
    state: InteractionState
    conversation: tuple[dict, ...]


def _count_words(messages: Sequence[dict]) -> int:
    return sum(len(m["content"].split()) for m in messages)


def run_interaction(
    question: str,
    llm,
    retriever,
    reader,
    config: RunConfig,
    examples: Sequence[tuple[str, str]] = (),
    multi_turn: bool = True,
    max_reference_chars: int | None = None,
    clock: Callable[[], float] = time.perf_counter,
) -> RunResult:
    """Run the full interaction loop for one question.

    Counters tally whitespace words over every request payload sent and
    every generation received. The clock is injectable so scripted runs
    can produce bit-identical traces.

    Raises UnparseableGenerationError after two consecutive generations
    with fatal parse violations, and RunAbortedError on backend failure;
    both carry the partial tree, path, counters and feedback list.
    """
    start_time = clock()
    state = InteractionState()
    tree = TreeOfReasoning(root_question=question)
    feedbacks: list[Feedback] = []
    input_words = 0
    output_words = 0
    rounds = 0
    consecutive_parse_failures = 0
    pending_restart: str | None = None

    instruction = FIRST_ROUND_INSTRUCTION
    if config.mode is Mode.LONG_FORM:
        instruction += LONG_FORM_SUPPLEMENT
    bundle = PromptBundle(
        system_instruction=instruction,
        few_shot_examples=tuple(examples),
        question=question,
    )
    first_prompt = build_first_round_prompt(question, examples, config.mode)
    messages: list[dict] = [{"role": "user", "content": first_prompt}]
    conversation: list[dict] = list(messages)

    def counters_now() -> EfficiencyCounters:
        return EfficiencyCounters(
            input_words=input_words,
            output_words=output_words,
            rounds=rounds,
            wall_time_seconds=max(clock() - start_time, 0.0),
        )

    def abort(error: RunAbortedError) -> RunAbortedError:
        error.tree = tree
        error.path = state.correct_path
        error.counters = counters_now()
        error.feedbacks = list(feedbacks)
        return error

    def ir(node: CoqNode) -> IrOutcome:
        return ir_step(
            node, question, retriever, reader, config,
            max_reference_chars=max_reference_chars,
        )

    no_ir = Ablation.NO_IR in config.ablation
    finish = False
    while not (finish or rounds > config.r_max):
        input_words += _count_words(messages)
        try:
            raw = llm.generate(messages)
        except (ScriptExhaustedError, BackendUnavailableError) as exc:
            raise abort(RunAbortedError(f"llm backend failed: {exc}", cause=exc)) from exc
        output_words += len(raw.split())
        rounds += 1
        state.rounds_used = rounds

        report = parse_coq(raw)
        if report.chain is None:
            consecutive_parse_failures += 1
            fatal = "; ".join(v.message for v in report.violations if v.fatal)
            logger.warning("round %d generation did not parse: %s", rounds, fatal)
            if consecutive_parse_failures >= 2 or no_ir:
                raise abort(
                    UnparseableGenerationError(
                        f"unparseable generation in round {rounds}: {fatal}"
                    )
                )
            continue
        consecutive_parse_failures = 0
        chain = report.chain
        tree.branches.append(Branch(round=rounds, chain=chain, restart_query=pending_restart))
        if multi_turn:
            messages.append({"role": "assistant", "content": raw})
            conversation = list(messages)
        else:
            conversation = list(messages) + [{"role": "assistant", "content": raw}]

        if no_ir:
            # Retrieval-free ablation: one generation, path from the chain
            # itself under a placeholder document.
            for node in chain.nodes:
                if node.answer is not None:
                    state.correct_path = record_correct(
                        state.correct_path, node.query, node.answer,
                        NO_IR_DOCUMENT, SourceTag.FROM_LLM,
                    )
                state.processed.add(normalize_query(node.query))
            feedback = Feedback(kind=FeedbackKind.FINISH)
            state.last_feedback = feedback
            feedbacks.append(feedback)
            finish = True
            break

        feedback = traverse(chain, state, ir)
        feedbacks.append(feedback)
        if feedback.kind is FeedbackKind.FINISH:
            finish = True
        else:
            pending_restart = feedback.query
            bundle = replace(bundle, feedback_prefix=feedback.prompt)
            feedback_text = build_feedback_round_prompt(bundle)
            if multi_turn:
                messages.append({"role": "user", "content": feedback_text})
            else:
                messages = [
                    {"role": "user", "content": f"{first_prompt}\n\n{feedback_text}"}
                ]

    return RunResult(
        question=question,
        tree=tree,
        path=state.correct_path,
        counters=counters_now(),
        feedbacks=tuple(feedbacks),
        state=state,
        conversation=tuple(conversation),
    )
