"""Consistency checking, the confidence gate, and feedback construction.

One IR step takes a chain node: retrieve the Top-1 document, extract an
answer span with confidence, then decide. Unsolved nodes always get a
completion feedback, whatever the confidence. Solved nodes get a correction
feedback only when the reader is confident (f strictly above theta) AND the
model answer is inconsistent with the extraction; otherwise they pass and
the model's own answer is kept. Failed retrieval passes through without
recording the node.

The two feedback prompt templates are exact wire formats toward the LLM and
must not be reworded.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .chain import CoqNode, normalize_query
from .config import Ablation, Mode, RunConfig, SourceTag
from .errors import NoMatchError
from .metrics import rouge_l
from .retrieval import Document

__all__ = [
    "FeedbackKind",
    "Feedback",
    "ConsistencyVerdict",
    "IrOutcome",
    "check_consistency",
    "build_verify_prompt",
    "build_complete_prompt",
    "ir_step",
]

VERIFY_TEMPLATE = (
    "According to the Reference, the answer for {q} should be {g}, "
    "you can change your answer and continue constructing the reasoning chain "
    "for [Question]: {question}. Reference: {d}."
)
COMPLETE_TEMPLATE = (
    "According to the Reference, the answer for {q} should be {g}, "
    "you can give your answer and continue constructing the reasoning chain "
    "for [Question]: {question}. Reference: {d}."
)


class FeedbackKind(str, Enum):
    PASS = "pass"
    CORRECT = "correct"
    COMPLETE = "complete"
    FINISH = "finish"
    RETRIEVAL_FAILED = "retrieval_failed"


@dataclass(frozen=True)
class Feedback:
    """Outcome of one IR step; drives the interaction loop.

    Correct and Complete carry the query, the extracted answer, the
    supporting document, and the feedback prompt. Pass and Finish carry
    nothing. RetrievalFailed carries only the query.
    """

    kind: FeedbackKind
    query: str | None = None
    ir_answer: str | None = None
    document: Document | None = None
    prompt: str | None = None

    def __post_init__(self):
        loaded = (self.query, self.ir_answer, self.document, self.prompt)
        if self.kind in (FeedbackKind.CORRECT, FeedbackKind.COMPLETE):
            if any(item is None for item in loaded):
                raise ValueError(f"{self.kind.value} feedback must carry query, answer, document, prompt")
        elif self.kind is FeedbackKind.RETRIEVAL_FAILED:
            if self.query is None or any(item is not None for item in loaded[1:]):
                raise ValueError("retrieval_failed feedback carries only the query")
        else:
            if any(item is not None for item in loaded):
                raise ValueError(f"{self.kind.value} feedback carries no payload")


@dataclass(frozen=True)
class ConsistencyVerdict:
    consistent: bool
    rouge_score: float | None = None


@dataclass(frozen=True)
class IrOutcome:
    """Feedback plus the record the engine stores in the correct path.

    The feedback alone cannot drive path recording because Pass carries no
    payload; answer, document and source are None exactly when the node is
    excluded from the path (failed retrieval, or completion disabled).
    """

    feedback: Feedback
    query: str
    answer: str | None = None
    document: Document | None = None
    source: SourceTag | None = None


def check_consistency(
    a: str, g: str, doc: Document, mode: Mode, alpha: float
) -> ConsistencyVerdict:
    """Is the model answer consistent with the retrieved information?

    Short form: the normalized extraction must appear inside the normalized
    answer. Long form: ROUGE-L between the answer and the document text must
    exceed alpha (strictly); the score is returned alongside the verdict.
    """
    if mode is Mode.LONG_FORM:
        score = rouge_l(a, doc.text)
        return ConsistencyVerdict(consistent=score > alpha, rouge_score=score)
    return ConsistencyVerdict(consistent=normalize_query(g) in normalize_query(a))


def build_verify_prompt(q: str, g: str, doc: Document, root_question: str) -> str:
    """Correction feedback; exact template with four substitution slots."""
    _require_nonempty(q=q, g=g, doc_text=doc.text, root_question=root_question)
    return VERIFY_TEMPLATE.format(q=q, g=g, question=root_question, d=doc.text)


def build_complete_prompt(q: str, g: str, doc: Document, root_question: str) -> str:
    """Completion feedback; differs from verification only in give/change."""
    _require_nonempty(q=q, g=g, doc_text=doc.text, root_question=root_question)
    return COMPLETE_TEMPLATE.format(q=q, g=g, question=root_question, d=doc.text)


def _require_nonempty(**slots: str) -> None:
    for name, value in slots.items():
        if not value:
            raise ValueError(f"prompt slot {name} must be non-empty")


def _clip_reference(doc: Document, max_chars: int | None) -> Document:
    if max_chars is None or len(doc.text) <= max_chars:
        return doc
    return Document(id=doc.id, title=doc.title, text=doc.text[:max_chars])


def ir_step(
    node: CoqNode,
    root_question: str,
    retriever,
    reader,
    config: RunConfig,
    max_reference_chars: int | None = None,
) -> IrOutcome:
    """One verification-or-completion step for a single chain node."""
    try:
        doc = retriever.retrieve(node.query)
    except NoMatchError:
        return IrOutcome(
            feedback=Feedback(kind=FeedbackKind.RETRIEVAL_FAILED, query=node.query),
            query=node.query,
        )
    output = reader.read(node.query, doc)

    if node.unsolved:
        if Ablation.NO_COMPLETION in config.ablation:
            # Ablated completion: the node passes and stays out of the path.
            return IrOutcome(feedback=Feedback(kind=FeedbackKind.PASS), query=node.query)
        prompt = build_complete_prompt(
            node.query, output.g, _clip_reference(doc, max_reference_chars), root_question
        )
        return IrOutcome(
            feedback=Feedback(
                kind=FeedbackKind.COMPLETE,
                query=node.query,
                ir_answer=output.g,
                document=doc,
                prompt=prompt,
            ),
            query=node.query,
            answer=output.g,
            document=doc,
            source=SourceTag.COMPLETED_BY_IR,
        )

    if Ablation.NO_VERIFICATION not in config.ablation and output.f > config.theta:
        verdict = check_consistency(node.answer, output.g, doc, config.mode, config.alpha)
        if not verdict.consistent:
            prompt = build_verify_prompt(
                node.query, output.g, _clip_reference(doc, max_reference_chars), root_question
            )
            return IrOutcome(
                feedback=Feedback(
                    kind=FeedbackKind.CORRECT,
                    query=node.query,
                    ir_answer=output.g,
                    document=doc,
                    prompt=prompt,
                ),
                query=node.query,
                answer=output.g,
                document=doc,
                source=SourceTag.CORRECTED_BY_IR,
            )

    return IrOutcome(
        feedback=Feedback(kind=FeedbackKind.PASS),
        query=node.query,
        answer=node.answer,
        document=doc,
        source=SourceTag.FROM_LLM,
    )
