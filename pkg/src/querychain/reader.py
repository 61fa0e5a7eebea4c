"""Answer-span extraction from a (query, document) pair.

Two backends satisfy the same contract: a remote neural reader service and
a deterministic lexical baseline. The baseline exists to exercise the
verify/complete control flow offline, not to be a good QA model.

Baseline rule: pick the sentence with the most distinct query content terms
(ties go to the earliest sentence); inside it the answer is the longest run
of entity-like tokens (capitalized or digit-bearing) that are not query
terms, with ties resolved to the run nearest after the matched terms; if no
such run exists the answer is the whole sentence.

Baseline confidence: f = 2 * matched / distinct-content-terms, plus 1 when
an entity-like token sits within one position of the matched window
(window interior included). Range [0, 3]. Interrogatives and function
words are excluded from the content terms so that, for example, the "who"
in "who directed jaws" does not dilute the coverage ratio; when every term
is such a stopword the unfiltered terms are used instead.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import requests

from .chain import normalize_query
from .errors import BackendUnavailableError, EmptyDocumentError
from .retrieval import Document

__all__ = [
    "ReaderOutput",
    "BaselineReader",
    "RemoteReader",
    "read",
    "query_content_terms",
]

# Interrogatives, auxiliaries, and closed-class function words. Kept small
# on purpose; the goal is stable confidence arithmetic, not linguistics.
STOPWORDS = frozenset(
    """
    a an the and or but not no nor of in on at to for by with from as into
    onto over under between during before after above below up down out off
    again further then once here there when where why how who whom whose
    what which this that these those is are was were be been being am do
    does did doing have has had having will would shall should can could
    may might must it its he she they them his her their our your my me we
    you i us than too very so such both each few more most other some any
    own same about against
    """.split()
)

_SENTENCE_END = re.compile(r"[.?!]+(?=\s)|[.?!]+$")


@dataclass(frozen=True)
class ReaderOutput:
    """Extracted span g with confidence f; offsets index the document text."""

    g: str
    f: float
    span_start: int
    span_end: int


def query_content_terms(query: str) -> list[str]:
    """Distinct normalized query terms with stopwords removed.

    Falls back to the unfiltered distinct terms when everything is a
    stopword, so a query like "who is he" still has something to match.
    """
    seen: list[str] = []
    for raw in query.split():
        term = normalize_query(raw)
        if term and term not in seen:
            seen.append(term)
    content = [t for t in seen if t not in STOPWORDS]
    return content if content else seen


def _sentence_spans(text: str) -> list[tuple[int, int]]:
    """(start, end) character spans; the end includes terminal punctuation."""
    spans = []
    start = 0
    for match in _SENTENCE_END.finditer(text):
        end = match.end()
        if text[start:end].strip():
            spans.append((start, end))
        start = end
    if text[start:].strip():
        spans.append((start, len(text)))
    return spans


def _token_spans(text: str, start: int, end: int) -> list[tuple[int, int]]:
    """Whitespace-token spans within text[start:end], absolute offsets."""
    spans = []
    i = start
    while i < end:
        while i < end and text[i].isspace():
            i += 1
        if i >= end:
            break
        j = i
        while j < end and not text[j].isspace():
            j += 1
        spans.append((i, j))
        i = j
    return spans


def _is_entity_like(token: str) -> bool:
    # Capitalized words, numbers, and date-like tokens all start with an
    # uppercase letter or contain a digit once terminal punctuation is gone.
    stripped = token.strip("?.!")
    if not stripped:
        return False
    if any(ch.isdigit() for ch in stripped):
        return True
    return stripped[0].isupper()


def _trim_span(text: str, start: int, end: int) -> tuple[int, int]:
    while start < end and text[start].isspace():
        start += 1
    while end > start and text[end - 1].isspace():
        end -= 1
    return start, end


class BaselineReader:
    """Deterministic lexical reader; stateless and safe for concurrent use."""

    kind = "lexical-baseline"
    confidence_scale_note = (
        "f is 2 * (matched content terms / distinct content terms) plus an "
        "entity-adjacency bonus of 1; range [0, 3]. The default theta of 1.5 "
        "passes weak matches and corrects on strong ones."
    )

    def read(self, query: str, doc: Document) -> ReaderOutput:
        if not doc.text:
            raise EmptyDocumentError(f"document {doc.id!r} has empty text")
        terms = query_content_terms(query)

        # Sentence selection: most distinct content terms, earliest wins.
        best_span = None
        best_tokens = None
        best_matched: set[str] = set()
        for span in _sentence_spans(doc.text):
            token_spans = _token_spans(doc.text, span[0], span[1])
            normalized = [normalize_query(doc.text[s:e]) for s, e in token_spans]
            matched = {t for t in terms if t in normalized}
            if best_span is None or len(matched) > len(best_matched):
                best_span, best_tokens, best_matched = span, token_spans, matched
        if best_span is None:
            # Text is pure whitespace; treat the whole field as one sentence.
            best_span = (0, len(doc.text))
            best_tokens = _token_spans(doc.text, 0, len(doc.text))
            best_matched = set()

        tokens = [doc.text[s:e] for s, e in best_tokens]
        normalized = [normalize_query(t) for t in tokens]
        match_positions = [i for i, t in enumerate(normalized) if t in best_matched]

        # Confidence: coverage plus entity adjacency around the match window.
        matched_count = len(best_matched)
        total = len(terms)
        coverage = 2.0 * matched_count / total if total else 0.0
        bonus = 0.0
        if match_positions:
            window_lo = min(match_positions) - 1
            window_hi = max(match_positions) + 1
            for i, token in enumerate(tokens):
                if window_lo <= i <= window_hi and _is_entity_like(token):
                    bonus = 1.0
                    break
        f = coverage + bonus

        # Answer span: longest run of entity-like non-query tokens.
        runs: list[tuple[int, int]] = []  # [start token, end token] inclusive
        i = 0
        while i < len(tokens):
            if _is_entity_like(tokens[i]) and normalized[i] not in terms:
                j = i
                while (
                    j + 1 < len(tokens)
                    and _is_entity_like(tokens[j + 1])
                    and normalized[j + 1] not in terms
                ):
                    j += 1
                runs.append((i, j))
                i = j + 1
            else:
                i += 1

        if runs:
            longest = max(j - i for i, j in runs)
            candidates = [r for r in runs if r[1] - r[0] == longest]
            chosen = candidates[0]
            if match_positions and len(candidates) > 1:
                window_hi = max(match_positions)
                after = [r for r in candidates if r[0] > window_hi]
                if after:
                    chosen = min(after, key=lambda r: r[0])
            start = best_tokens[chosen[0]][0]
            end = best_tokens[chosen[1]][1]
        else:
            start, end = _trim_span(doc.text, best_span[0], best_span[1])
            if start == end:
                start, end = best_span

        g = doc.text[start:end]
        return ReaderOutput(g=g, f=f, span_start=start, span_end=end)


class RemoteReader:
    """HTTP client for a neural reader service.

    Wire contract: POST {"query": ..., "document_text": ...}; the response
    carries {"answer", "confidence", "start", "end"} and the answer must
    equal document_text[start:end]. Contract violations and transport
    failures map to BackendUnavailableError.
    """

    kind = "remote-neural"
    confidence_scale_note = (
        "f is the remote model's logit-scale confidence; theta should be "
        "tuned to that scale via RunConfig."
    )

    def __init__(self, endpoint: str, timeout: float = 30.0, session=None):
        self._endpoint = endpoint
        self._timeout = timeout
        self._session = session if session is not None else requests.Session()

    def read(self, query: str, doc: Document) -> ReaderOutput:
        if not doc.text:
            raise EmptyDocumentError(f"document {doc.id!r} has empty text")
        try:
            response = self._session.post(
                self._endpoint,
                json={"query": query, "document_text": doc.text},
                timeout=self._timeout,
            )
            response.raise_for_status()
            payload = response.json()
        except requests.RequestException as exc:
            raise BackendUnavailableError(f"reader request failed: {exc}") from exc
        except ValueError as exc:
            raise BackendUnavailableError(f"reader returned invalid JSON: {exc}") from exc
        try:
            output = ReaderOutput(
                g=str(payload["answer"]),
                f=float(payload["confidence"]),
                span_start=int(payload["start"]),
                span_end=int(payload["end"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendUnavailableError(f"reader response missing field: {exc}") from exc
        if not (0 <= output.span_start < output.span_end <= len(doc.text)):
            raise BackendUnavailableError("reader span offsets out of range")
        if doc.text[output.span_start : output.span_end] != output.g:
            raise BackendUnavailableError("reader answer does not match its span")
        return output


def read(backend, query: str, doc: Document) -> ReaderOutput:
    """Uniform entry point over any reader backend."""
    return backend.read(query, doc)
