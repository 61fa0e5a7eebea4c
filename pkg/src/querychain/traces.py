"""Trace export: one self-contained JSON object per run.

A trace carries the full tree (branches with their nodes and restart
points), the correct path with document bodies, the feedback sequence, the
final content with its reference table, the prediction, the gold answer
when known, counters, and the run configuration. Every reported metric can
be recomputed from the trace alone; row_from_trace is the single code path
used both when reporting a live run and when re-deriving rows from a trace
file, so the two always agree.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Iterable

from .config import Mode
from .metrics import cover_em, rouge_l, source_distribution
from .pipeline import AnswerResult
from .tracing import FinalContent, Reference, skc

__all__ = [
    "TRACE_SCHEMA",
    "build_trace_record",
    "write_traces",
    "read_traces",
    "row_from_trace",
]

TRACE_SCHEMA = "querychain-trace-v1"


def build_trace_record(result: AnswerResult, hops: int | None = None) -> dict:
    config = result.run_config
    return {
        "schema": TRACE_SCHEMA,
        "id": result.question_id,
        "question": result.question,
        "gold": list(result.gold) if result.gold is not None else None,
        "hops": hops,
        "mode": config.mode.value,
        "config": {
            "r_max": config.r_max,
            "theta": config.theta,
            "alpha": config.alpha,
            "mode": config.mode.value,
            "ablation": sorted(a.value for a in config.ablation),
        },
        "error": result.error,
        "tree": {
            "root_question": result.tree.root_question,
            "branches": [
                {
                    "round": branch.round,
                    "restart_query": branch.restart_query,
                    "nodes": [
                        {
                            "index": node.index,
                            "query": node.query,
                            "answer": node.answer,
                            "unsolved": node.unsolved,
                        }
                        for node in branch.chain.nodes
                    ],
                    "final_answer": branch.chain.final_answer,
                }
                for branch in result.tree.branches
            ],
        },
        "path": [
            {
                "query": entry.query,
                "answer": entry.answer,
                "source": entry.source.value,
                "document": {
                    "id": entry.document.id,
                    "title": entry.document.title,
                    "text": entry.document.text,
                },
            }
            for entry in result.path.entries
        ],
        "feedbacks": [
            {"kind": feedback.kind.value, "query": feedback.query}
            for feedback in result.feedbacks
        ],
        "final_content": {
            "text": result.final_content.text,
            "references": [
                {
                    "mark": ref.mark,
                    "query": ref.query,
                    "document_id": ref.document_id,
                    "char_span": list(ref.char_span) if ref.char_span is not None else None,
                }
                for ref in result.final_content.references
            ],
        },
        "prediction": result.prediction,
        "counters": {
            "input_words": result.counters.input_words,
            "output_words": result.counters.output_words,
            "rounds": result.counters.rounds,
            "wall_time_seconds": result.counters.wall_time_seconds,
        },
    }


def write_traces(records: Iterable[dict], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False, sort_keys=True))
            handle.write("\n")


def read_traces(path: str | Path) -> list[dict]:
    records = []
    with open(path, encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def _score(prediction: str, gold: list[str] | None, mode: Mode) -> tuple[str, float | None]:
    metric = "cover_em" if mode is Mode.SHORT_FORM else "rouge_l"
    if not gold:
        return metric, None
    if mode is Mode.SHORT_FORM:
        score = float(max(cover_em(prediction, alias) for alias in gold))
    else:
        score = max(rouge_l(prediction, alias) for alias in gold)
    return metric, score


def row_from_trace(record: dict) -> dict:
    """Recompute one report row from a trace record alone."""
    mode = Mode(record["mode"])
    metric, score = _score(record["prediction"], record.get("gold"), mode)

    sources = [entry["source"] for entry in record["path"]]
    if sources:
        # Reuse the metric implementation through a light stand-in path.
        class _Entry:
            def __init__(self, source):
                self.source = source

        class _Path:
            def __init__(self, entries):
                self.entries = entries

        dist = source_distribution(_Path([_Entry(s) for s in sources]))
        distribution = {
            "from_llm": dist.from_llm,
            "corrected": dist.corrected,
            "completed": dist.completed,
        }
    else:
        distribution = None

    references = tuple(
        Reference(
            mark=ref["mark"],
            query=ref["query"],
            document_id=ref["document_id"],
            char_span=tuple(ref["char_span"]) if ref["char_span"] is not None else None,
        )
        for ref in record["final_content"]["references"]
    )
    content = FinalContent(text=record["final_content"]["text"], references=references)

    steps = sum(len(branch["nodes"]) for branch in record["tree"]["branches"])
    return {
        "id": record["id"],
        "question": record["question"],
        "gold": record.get("gold"),
        "mode": mode.value,
        "prediction": record["prediction"],
        "metric": metric,
        "score": score,
        "reasoning_steps": steps,
        "skc": skc(content),
        "source_distribution": distribution,
        "counters": dict(record["counters"]),
        "hops": record.get("hops"),
        "ablation": list(record["config"]["ablation"]),
        "error": record.get("error"),
    }
