"""Final-content generation support: the tracing prompt and reference marks.

The tracing prompt lists the correct path's query-answer pairs and asks
the model for the final content; it is an exact wire format. Reference
marks are then attached deterministically by the engine rather than
trusting the model to cite: each path entry whose answer occurs in the
text (up to normalization) gets an inline mark "[k]" right after the first
unclaimed occurrence, longest answers first so nested answers cannot steal
a shorter entry's span. Entries that never occur are appended as
unanchored references, so every path entry yields exactly one reference.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

from .errors import EmptyPathError

if TYPE_CHECKING:  # pragma: no cover - type hints only
    from .engine import CorrectPath

__all__ = [
    "TRACING_PREFIX",
    "Reference",
    "FinalContent",
    "build_tracing_prompt",
    "attach_references",
    "skc",
    "render_final_content",
]

TRACING_PREFIX = (
    "You can try to generate the final answer for the [Question] by referring "
    "to the [Query]-[Answer] pairs, starting with [Final Content]."
)

_TERMINAL_PUNCT = "?.!"


@dataclass(frozen=True)
class Reference:
    """One supporting-document reference; char_span present when anchored."""

    mark: int
    query: str
    document_id: str
    char_span: tuple[int, int] | None = None


@dataclass(frozen=True)
class FinalContent:
    """Generated final text with inline marks plus the reference table."""

    text: str
    references: tuple[Reference, ...] = ()


def build_tracing_prompt(path: "CorrectPath") -> str:
    """Exact tracing template over the path's query-answer pairs.

    The question itself has no substitution slot; it reaches the model
    through the conversation history of the run.
    """
    if not path.entries:
        raise EmptyPathError("tracing requires a non-empty correct path")
    parts = [TRACING_PREFIX]
    for i, entry in enumerate(path.entries, start=1):
        parts.append(f" [Query {i}]: {entry.query}. [Answer {i}]: {entry.answer}.")
    return "".join(parts)


def _normalize_with_offsets(text: str) -> tuple[str, list[int]]:
    """Lowercased, whitespace-collapsed text plus a map to raw offsets.

    Mirrors the query normalization rules (including the terminal
    punctuation strip) while remembering, for every normalized character,
    the raw index it came from.
    """
    chars: list[str] = []
    offsets: list[int] = []
    pending_space_at: int | None = None
    for i, ch in enumerate(text):
        if ch.isspace():
            if chars and pending_space_at is None:
                pending_space_at = i
            continue
        if pending_space_at is not None:
            chars.append(" ")
            offsets.append(pending_space_at)
            pending_space_at = None
        chars.append(ch.lower())
        offsets.append(i)
    while chars and chars[-1] in _TERMINAL_PUNCT:
        chars.pop()
        offsets.pop()
    while chars and chars[-1] == " ":
        chars.pop()
        offsets.pop()
    return "".join(chars), offsets


def attach_references(final_text: str, path: "CorrectPath") -> FinalContent:
    """Anchor each path entry's answer in the text and number the marks.

    Claimed spans are disjoint: an occurrence already claimed by a longer
    answer is skipped in favor of the next one. Marks are numbered 1..k in
    text order; unanchored references continue the numbering in path order.
    """
    from .chain import normalize_query

    norm_text, offsets = _normalize_with_offsets(final_text)

    # Longest normalized answer first; ties keep path order (sort is stable).
    order = sorted(
        range(len(path.entries)),
        key=lambda i: -len(normalize_query(path.entries[i].answer)),
    )
    claimed: list[tuple[int, int]] = []
    anchored: dict[int, tuple[int, int]] = {}  # entry position -> raw span
    for i in order:
        needle = normalize_query(path.entries[i].answer)
        if not needle:
            continue
        search_from = 0
        while True:
            hit = norm_text.find(needle, search_from)
            if hit < 0:
                break
            span = (hit, hit + len(needle))
            if all(span[1] <= s or span[0] >= e for s, e in claimed):
                claimed.append(span)
                raw_start = offsets[span[0]]
                raw_end = offsets[span[1] - 1] + 1
                anchored[i] = (raw_start, raw_end)
                break
            search_from = hit + 1

    # Number anchored references by text position, then insert the marks
    # left to right, shifting recorded spans by the marks already inserted.
    by_position = sorted(anchored.items(), key=lambda item: item[1])
    references: list[Reference] = []
    pieces: list[str] = []
    cursor = 0
    shift = 0
    for mark, (entry_index, (raw_start, raw_end)) in enumerate(by_position, start=1):
        entry = path.entries[entry_index]
        pieces.append(final_text[cursor:raw_end])
        mark_text = f"[{mark}]"
        pieces.append(mark_text)
        references.append(
            Reference(
                mark=mark,
                query=entry.query,
                document_id=entry.document.id,
                char_span=(raw_start + shift, raw_end + shift),
            )
        )
        shift += len(mark_text)
        cursor = raw_end
    pieces.append(final_text[cursor:])
    marked_text = "".join(pieces)

    next_mark = len(references) + 1
    for i, entry in enumerate(path.entries):
        if i in anchored:
            continue
        references.append(
            Reference(mark=next_mark, query=entry.query, document_id=entry.document.id)
        )
        next_mark += 1

    return FinalContent(text=marked_text, references=tuple(references))


def skc(content: FinalContent) -> int:
    """Knowledge items carrying a supporting-document mark (anchored refs)."""
    return sum(1 for ref in content.references if ref.char_span is not None)


def render_final_content(content: FinalContent, layout: str = "inline") -> str:
    """Human-readable rendering; inline marks or a trailing reference table.

    Both layouts list the reference table; "table" additionally keeps the
    body free of inline marks.
    """
    if layout not in ("inline", "table"):
        raise ValueError(f"unknown layout {layout!r}")
    if layout == "inline":
        body = content.text
    else:
        body = content.text
        # Strip the inline marks, longest mark number first so "[12]" is
        # removed before "[1]" could match inside it.
        for ref in sorted(content.references, key=lambda r: -r.mark):
            if ref.char_span is not None:
                body = body.replace(f"[{ref.mark}]", "", 1)
    if not content.references:
        return body
    lines = [body, "", "References:"]
    for ref in content.references:
        where = "unanchored" if ref.char_span is None else f"chars {ref.char_span[0]}-{ref.char_span[1]}"
        lines.append(f"  [{ref.mark}] {ref.query} -> {ref.document_id} ({where})")
    return "\n".join(lines)
