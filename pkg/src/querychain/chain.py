"""Chain-of-query representation and its textual grammar.

A chain is one model generation planning the reasoning for a complex
question as an ordered list of (query, answer) nodes. The wire grammar is
line-oriented and bit-exact in its markers:

    [Query k]: <text>
    [Answer k]: <text>
    [Unsolved Query]            (optionally "[Unsolved Query]: <restated query>")
    [Final Answer]: <text>

Unknown lines between markers attach to the preceding field, so multi-line
answers survive. Parsing is total: recoverable deviations are reported as
violations, and only a missing query marker, a duplicate or non-consecutive
query index, or an empty query text make the chain unrecoverable.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

__all__ = [
    "CoqNode",
    "ChainOfQuery",
    "Violation",
    "ParseReport",
    "normalize_query",
    "parse_coq",
    "render_coq",
]

_QUERY_RE = re.compile(r"\[Query (\d+)\]:(.*)\Z", re.DOTALL)
_ANSWER_RE = re.compile(r"\[Answer (\d+)\]:(.*)\Z", re.DOTALL)
_FINAL_RE = re.compile(r"\[Final Answer\]:(.*)\Z", re.DOTALL)
_UNSOLVED_RE = re.compile(r"\[Unsolved Query\](?::(.*))?\Z", re.DOTALL)

_TERMINAL_PUNCT = "?.!"


def normalize_query(q: str) -> str:
    """Canonical form used for duplicate detection and containment checks.

    Lowercase, outer whitespace stripped, internal whitespace runs collapsed
    to one space, and the trailing run of terminal punctuation (?.!) removed.
    Idempotent.
    """
    q = " ".join(q.lower().split())
    q = q.rstrip(_TERMINAL_PUNCT)
    return q.rstrip()


@dataclass(frozen=True)
class CoqNode:
    """One (query, answer) node; ``unsolved`` means the answer is missing."""

    index: int
    query: str
    answer: str | None = None
    unsolved: bool = False

    def __post_init__(self):
        if self.index < 1:
            raise ValueError(f"node index must be positive, got {self.index}")
        if not self.query.strip():
            raise ValueError("node query must be non-empty after trimming")
        if self.unsolved and self.answer is not None:
            raise ValueError("unsolved node cannot carry an answer")
        if not self.unsolved and self.answer is None:
            raise ValueError("solved node must carry an answer")


@dataclass(frozen=True)
class ChainOfQuery:
    """Ordered nodes of one generation plus the optional final answer.

    Indices are checked to be 1..n consecutive. The "at most one unsolved
    node, in last position" rule is NOT enforced here: the parser demotes a
    misplaced unsolved marker to a recoverable violation and the chain still
    carries it, so traversal visits it in order.
    """

    nodes: tuple[CoqNode, ...]
    final_answer: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "nodes", tuple(self.nodes))
        for position, node in enumerate(self.nodes, start=1):
            if node.index != position:
                raise ValueError(
                    f"node indices must be consecutive from 1; position {position} has index {node.index}"
                )


@dataclass(frozen=True)
class Violation:
    """One parse deviation; fatal ones leave the report without a chain."""

    line: int
    message: str
    fatal: bool = False


@dataclass(frozen=True)
class ParseReport:
    chain: ChainOfQuery | None
    violations: tuple[Violation, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "violations", tuple(self.violations))
        has_fatal = any(v.fatal for v in self.violations)
        if (self.chain is None) != has_fatal:
            raise ValueError("chain must be absent exactly when a fatal violation exists")


class _NodeDraft:
    """Mutable node under construction; text fields accumulate line parts."""

    def __init__(self, index: int, line: int):
        self.index = index
        self.line = line
        self.query_parts: list[str] = []
        self.answer_parts: list[str] | None = None
        self.unsolved = False


def _marker_text(raw: str) -> list[str]:
    # The canonical separator is ": "; exactly one space after the colon
    # belongs to the marker, everything beyond it is field text. Keeping
    # additional spaces verbatim makes render -> parse an identity.
    if raw.startswith(" "):
        raw = raw[1:]
    return [raw]


def parse_coq(raw: str) -> ParseReport:
    """Parse one generation into a chain, reporting every deviation.

    Never raises on input content: a fatal violation yields a report whose
    chain is absent. Scanning stops at the first fatal violation.
    """
    violations: list[Violation] = []
    drafts: list[_NodeDraft] = []
    final_parts: list[str] | None = None
    # Where unknown lines attach; None before the first marker, and a
    # throwaway list after a discarded marker (e.g. an unsolved restatement).
    current_field: list[str] | None = None
    discard: list[str] = []

    def fatal(line_no: int, message: str) -> ParseReport:
        violations.append(Violation(line_no, message, fatal=True))
        return ParseReport(None, tuple(violations))

    for line_no, line in enumerate(raw.split("\n"), start=1):
        candidate = line.lstrip()

        m = _QUERY_RE.match(candidate)
        if m is not None:
            index = int(m.group(1))
            expected = len(drafts) + 1
            if any(d.index == index for d in drafts):
                return fatal(line_no, f"duplicate query index {index}")
            if index != expected:
                return fatal(line_no, f"non-consecutive query index {index}, expected {expected}")
            draft = _NodeDraft(index, line_no)
            draft.query_parts = _marker_text(m.group(2))
            drafts.append(draft)
            current_field = draft.query_parts
            continue

        m = _ANSWER_RE.match(candidate)
        if m is not None:
            index = int(m.group(1))
            if not drafts:
                violations.append(Violation(line_no, "answer marker before any query; ignored"))
                current_field = discard
                continue
            draft = drafts[-1]
            if index != draft.index:
                violations.append(
                    Violation(line_no, f"answer index {index} does not match open query {draft.index}")
                )
            if draft.unsolved:
                violations.append(
                    Violation(line_no, "answer follows an unsolved marker; the answer wins")
                )
                draft.unsolved = False
            elif draft.answer_parts is not None:
                violations.append(Violation(line_no, "duplicate answer line; the last one wins"))
            draft.answer_parts = _marker_text(m.group(2))
            current_field = draft.answer_parts
            continue

        m = _UNSOLVED_RE.match(candidate)
        if m is not None:
            if not drafts:
                violations.append(Violation(line_no, "unsolved marker before any query; ignored"))
                current_field = discard
                continue
            draft = drafts[-1]
            if draft.answer_parts is not None:
                violations.append(
                    Violation(line_no, "unsolved marker after an answer; marker ignored")
                )
                current_field = discard
                continue
            draft.unsolved = True
            # An optional restatement only repeats the query; it is dropped.
            current_field = discard
            continue

        m = _FINAL_RE.match(candidate)
        if m is not None:
            if final_parts is not None:
                violations.append(Violation(line_no, "multiple final answers; the last one wins"))
            final_parts = _marker_text(m.group(1))
            current_field = final_parts
            continue

        if current_field is None:
            if line.strip():
                violations.append(Violation(line_no, "text before the first marker; ignored"))
            continue
        current_field.append(line)

    if not drafts:
        return fatal(0, "no query markers found")

    nodes = []
    for position, draft in enumerate(drafts, start=1):
        query = "\n".join(draft.query_parts)
        if not query.strip():
            return fatal(draft.line, f"empty query text at node {draft.index}")
        answer = None if draft.answer_parts is None else "\n".join(draft.answer_parts)
        unsolved = draft.unsolved
        if answer is None and not unsolved:
            violations.append(
                Violation(draft.line, f"node {draft.index} has no answer; treated as unsolved")
            )
            unsolved = True
        if unsolved and position != len(drafts):
            violations.append(Violation(draft.line, f"unsolved node {draft.index} is not in final position"))
        nodes.append(CoqNode(index=draft.index, query=query, answer=answer, unsolved=unsolved))

    final_answer = None if final_parts is None else "\n".join(final_parts)
    chain = ChainOfQuery(nodes=tuple(nodes), final_answer=final_answer)
    return ParseReport(chain, tuple(violations))


def render_coq(chain: ChainOfQuery) -> str:
    """Serialize a chain in the canonical grammar; inverse of parse_coq."""
    lines = []
    for node in chain.nodes:
        lines.append(f"[Query {node.index}]: {node.query}")
        if node.unsolved:
            lines.append("[Unsolved Query]")
        else:
            lines.append(f"[Answer {node.index}]: {node.answer}")
    if chain.final_answer is not None:
        lines.append(f"[Final Answer]: {chain.final_answer}")
    return "\n".join(lines)
