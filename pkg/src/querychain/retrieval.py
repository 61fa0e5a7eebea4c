"""Top-1 document retrieval behind a uniform contract.

The built-in backend is an in-memory BM25 index (k1 = 1.2, b = 0.75) with a
Lucene-style idf, ln(1 + (N - df + 0.5) / (df + 0.5)), which stays positive
for every df <= N; that keeps "shares a term" equivalent to "scores above
zero", which the NoMatch rule relies on. Tokenization applies the query
normalization rules to each whitespace-separated term, so queries and
documents agree on term identity. Only the document text is indexed.

A remote dense retriever is reachable through RemoteRetriever; the engine
treats both backends identically.
"""

from __future__ import annotations

import json
import logging
import math
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import requests

from .chain import normalize_query
from .errors import (
    BackendUnavailableError,
    DuplicateDocIdError,
    EmptyCorpusError,
    NoMatchError,
)

__all__ = [
    "Document",
    "LexicalIndex",
    "tokenize",
    "build_index",
    "retrieve_top1",
    "load_corpus",
    "save_index",
    "load_index",
    "LocalRetriever",
    "RemoteRetriever",
    "BM25_K1",
    "BM25_B",
]

logger = logging.getLogger(__name__)

BM25_K1 = 1.2
BM25_B = 0.75


@dataclass(frozen=True)
class Document:
    id: str
    title: str
    text: str


def tokenize(text: str) -> list[str]:
    """Whitespace terms, each passed through normalize_query; empties dropped."""
    terms = []
    for raw in text.split():
        term = normalize_query(raw)
        if term:
            terms.append(term)
    return terms


@dataclass(frozen=True)
class LexicalIndex:
    documents: tuple[Document, ...]
    postings: dict[str, list[tuple[int, int]]]  # term -> [(doc position, tf)]
    doc_lengths: tuple[int, ...]
    avg_doc_length: float


def build_index(corpus: list[Document]) -> LexicalIndex:
    """Build the in-memory index; the corpus must be non-empty with unique ids."""
    if not corpus:
        raise EmptyCorpusError("cannot build an index over zero documents")
    seen: set[str] = set()
    for doc in corpus:
        if doc.id in seen:
            raise DuplicateDocIdError(f"duplicate document id {doc.id!r}")
        seen.add(doc.id)

    postings: dict[str, list[tuple[int, int]]] = {}
    doc_lengths = []
    for position, doc in enumerate(corpus):
        terms = tokenize(doc.text)
        doc_lengths.append(len(terms))
        for term, tf in Counter(terms).items():
            postings.setdefault(term, []).append((position, tf))
    avg = sum(doc_lengths) / len(doc_lengths)
    return LexicalIndex(
        documents=tuple(corpus),
        postings=postings,
        doc_lengths=tuple(doc_lengths),
        avg_doc_length=avg,
    )


def _idf(index: LexicalIndex, term: str) -> float:
    df = len(index.postings.get(term, ()))
    n = len(index.documents)
    return math.log(1.0 + (n - df + 0.5) / (df + 0.5))


def bm25_score(index: LexicalIndex, query_terms: list[str], position: int) -> float:
    """BM25 score of one document for the given term sequence.

    Repeated query terms contribute once per occurrence, mirroring a plain
    sum over the query.
    """
    doc_len = index.doc_lengths[position]
    score = 0.0
    for term in query_terms:
        tf = 0
        for doc_position, term_freq in index.postings.get(term, ()):
            if doc_position == position:
                tf = term_freq
                break
        if tf == 0:
            continue
        idf = _idf(index, term)
        norm = tf * (BM25_K1 + 1.0) / (
            tf + BM25_K1 * (1.0 - BM25_B + BM25_B * doc_len / index.avg_doc_length)
        )
        score += idf * norm
    return score


def retrieve_top1(index: LexicalIndex, query: str) -> Document:
    """Highest-scoring document for the query; ties go to the earlier one.

    Raises NoMatchError when no document shares a term with the query, which
    callers treat as pass-through control flow.

    Scores accumulate per document in query-term order, so the result is
    bit-identical to calling bm25_score on every candidate.
    """
    query_terms = tokenize(query)
    scores: dict[int, float] = {}
    for term in query_terms:
        entries = index.postings.get(term)
        if not entries:
            continue
        idf = _idf(index, term)
        for position, tf in entries:
            doc_len = index.doc_lengths[position]
            norm = tf * (BM25_K1 + 1.0) / (
                tf + BM25_K1 * (1.0 - BM25_B + BM25_B * doc_len / index.avg_doc_length)
            )
            scores[position] = scores.get(position, 0.0) + idf * norm
    if not scores:
        raise NoMatchError(f"no document shares a term with query {query!r}")
    best_position = -1
    best_score = float("-inf")
    for position in sorted(scores):
        if scores[position] > best_score:
            best_score = scores[position]
            best_position = position
    return index.documents[best_position]


def load_corpus(path: str | Path) -> list[Document]:
    """Read a corpus file: one JSON object per line with id, title, text."""
    docs = []
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            try:
                doc = Document(
                    id=str(record["id"]),
                    title=str(record.get("title", "")),
                    text=str(record["text"]),
                )
            except KeyError as exc:
                raise ValueError(f"{path}:{line_no}: missing field {exc}") from exc
            if not doc.text.strip():
                raise ValueError(f"{path}:{line_no}: document text must be non-empty")
            docs.append(doc)
    return docs


def save_index(index: LexicalIndex, path: str | Path) -> None:
    """Persist the postings file as JSON; load_index restores it exactly."""
    payload = {
        "documents": [{"id": d.id, "title": d.title, "text": d.text} for d in index.documents],
        "postings": {term: entries for term, entries in index.postings.items()},
        "doc_lengths": list(index.doc_lengths),
        "avg_doc_length": index.avg_doc_length,
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_index(path: str | Path) -> LexicalIndex:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return LexicalIndex(
        documents=tuple(Document(**d) for d in payload["documents"]),
        postings={term: [tuple(e) for e in entries] for term, entries in payload["postings"].items()},
        doc_lengths=tuple(payload["doc_lengths"]),
        avg_doc_length=payload["avg_doc_length"],
    )


class LocalRetriever:
    """Adapter giving the in-memory index the uniform retriever interface."""

    def __init__(self, index: LexicalIndex):
        self._index = index

    def retrieve(self, query: str) -> Document:
        return retrieve_top1(self._index, query)


class RemoteRetriever:
    """HTTP client for a dense retriever service.

    Wire contract: POST {"query": ..., "k": 1} and the response carries
    {"documents": [{"id", "title", "text", "score"}]}. An empty document
    list maps to NoMatchError; transport failures and malformed responses
    map to BackendUnavailableError.
    """

    def __init__(self, endpoint: str, timeout: float = 30.0, session=None):
        self._endpoint = endpoint
        self._timeout = timeout
        self._session = session if session is not None else requests.Session()

    def retrieve(self, query: str) -> Document:
        try:
            response = self._session.post(
                self._endpoint, json={"query": query, "k": 1}, timeout=self._timeout
            )
            response.raise_for_status()
            payload = response.json()
        except requests.RequestException as exc:
            raise BackendUnavailableError(f"retriever request failed: {exc}") from exc
        except ValueError as exc:
            raise BackendUnavailableError(f"retriever returned invalid JSON: {exc}") from exc
        documents = payload.get("documents")
        if not isinstance(documents, list):
            raise BackendUnavailableError("retriever response lacks a documents list")
        if not documents:
            raise NoMatchError(f"remote retriever found nothing for {query!r}")
        first = documents[0]
        try:
            return Document(id=str(first["id"]), title=str(first.get("title", "")), text=str(first["text"]))
        except (TypeError, KeyError) as exc:
            raise BackendUnavailableError(f"retriever document missing field: {exc}") from exc
