"""Dataset evaluation: run all questions, aggregate, write files, render figures.

Outputs under the chosen directory: report.jsonl (one row per question),
aggregate.json (the summary also printed to stdout), traces.jsonl (one
self-contained trace per run), and PNG figures for the source distribution,
the efficiency counters, and the round histogram. Question runs may execute
concurrently up to the configured bound; each run is isolated, file writes
happen once at the end, on one thread.
"""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace as dc_replace
from pathlib import Path
from typing import Callable, Sequence

from .config import EngineConfig, Mode
from .data import DatasetRecord
from .errors import ConfigError
from .llm import load_script_library
from .pipeline import (
    answer_question,
    build_llm,
    build_reader,
    build_retriever,
    load_examples_if_configured,
)
from .traces import TRACE_SCHEMA, build_trace_record, row_from_trace

__all__ = ["evaluate_dataset", "aggregate_rows", "write_report", "render_figures"]

logger = logging.getLogger(__name__)


def _run_one(
    record: DatasetRecord,
    config: EngineConfig,
    retriever,
    reader,
    examples,
    script_library,
    clock,
) -> dict:
    run_config = dc_replace(config.run, mode=record.task_mode)
    if config.llm == "scripted":
        generations = script_library.get(record.id)
        if generations is None:
            # A gap for one record degrades to an error row; it must not
            # stop the rest of the sweep the way a global ConfigError does.
            raise LookupError(f"no script for record id {record.id!r}")
        llm = build_llm(config, generations)
    else:
        llm = build_llm(config)
    result = answer_question(
        record.question,
        llm,
        retriever,
        reader,
        run_config,
        examples=examples,
        multi_turn=config.multi_turn,
        max_reference_chars=config.max_reference_chars,
        clock=clock,
        question_id=record.id,
        gold=record.gold,
    )
    return build_trace_record(result, hops=record.hops)


def evaluate_dataset(
    records: Sequence[DatasetRecord],
    config: EngineConfig,
    clock: Callable[[], float] = time.perf_counter,
) -> tuple[list[dict], list[dict], dict]:
    """Run every record; returns (traces, rows, aggregate).

    Per-question failures become rows with an error field; they never stop
    the sweep. Configuration errors do stop it.
    """
    if not records:
        raise ConfigError("dataset is empty")
    retriever = build_retriever(config)
    reader = build_reader(config)
    examples = load_examples_if_configured(config)
    script_library = load_script_library(config.script_path) if config.llm == "scripted" else {}

    def task(record: DatasetRecord) -> dict:
        try:
            return _run_one(record, config, retriever, reader, examples, script_library, clock)
        except ConfigError:
            raise
        except Exception as exc:  # per-question isolation
            logger.exception("record %s failed", record.id)
            return _error_trace(record, config, str(exc))

    if config.parallel > 1:
        with ThreadPoolExecutor(max_workers=config.parallel) as pool:
            traces = list(pool.map(task, records))
    else:
        traces = [task(record) for record in records]

    rows = [row_from_trace(trace) for trace in traces]
    return traces, rows, aggregate_rows(rows)


def _error_trace(record: DatasetRecord, config: EngineConfig, message: str) -> dict:
    run_config = dc_replace(config.run, mode=record.task_mode)
    return {
        "schema": TRACE_SCHEMA,
        "id": record.id,
        "question": record.question,
        "gold": list(record.gold),
        "hops": record.hops,
        "mode": record.task_mode.value,
        "config": {
            "r_max": run_config.r_max,
            "theta": run_config.theta,
            "alpha": run_config.alpha,
            "mode": run_config.mode.value,
            "ablation": sorted(a.value for a in run_config.ablation),
        },
        "error": message,
        "tree": {"root_question": record.question, "branches": []},
        "path": [],
        "feedbacks": [],
        "final_content": {"text": "", "references": []},
        "prediction": "",
        "counters": {"input_words": 0, "output_words": 0, "rounds": 0, "wall_time_seconds": 0.0},
    }


def _mean(values: list[float]) -> float:
    return sum(values) / len(values)


def aggregate_rows(rows: list[dict]) -> dict:
    """Summary statistics over report rows; pure and deterministic."""
    scored = [r for r in rows if r["error"] is None]
    by_mode: dict[str, dict] = {}
    for mode in (Mode.SHORT_FORM, Mode.LONG_FORM):
        mode_rows = [r for r in scored if r["mode"] == mode.value and r["score"] is not None]
        if not mode_rows:
            continue
        by_mode[mode.value] = {
            "metric": "cover_em" if mode is Mode.SHORT_FORM else "rouge_l",
            "count": len(mode_rows),
            "mean_score": _mean([r["score"] for r in mode_rows]),
        }

    aggregate = {
        "count": len(rows),
        "errors": sum(1 for r in rows if r["error"] is not None),
        "by_mode": by_mode,
        "mean_counters": None,
        "mean_source_distribution": None,
        "mean_reasoning_steps": None,
        "mean_skc": None,
        "per_hop": None,
        "ablation": sorted({a for r in rows for a in r["ablation"]}),
    }
    if scored:
        aggregate["mean_counters"] = {
            key: _mean([r["counters"][key] for r in scored])
            for key in ("input_words", "output_words", "rounds", "wall_time_seconds")
        }
        aggregate["mean_reasoning_steps"] = _mean([r["reasoning_steps"] for r in scored])
        aggregate["mean_skc"] = _mean([r["skc"] for r in scored])
    with_path = [r for r in scored if r["source_distribution"] is not None]
    if with_path:
        aggregate["mean_source_distribution"] = {
            key: _mean([r["source_distribution"][key] for r in with_path])
            for key in ("from_llm", "corrected", "completed")
        }
    with_hops = [r for r in scored if r.get("hops") is not None and r["score"] is not None]
    if with_hops:
        per_hop = {}
        for hops in sorted({r["hops"] for r in with_hops}):
            hop_rows = [r for r in with_hops if r["hops"] == hops]
            per_hop[str(hops)] = {
                "count": len(hop_rows),
                "mean_score": _mean([r["score"] for r in hop_rows]),
            }
        aggregate["per_hop"] = per_hop
    return aggregate


def write_report(
    out_dir: str | Path,
    traces: list[dict],
    rows: list[dict],
    aggregate: dict,
    figures: bool = True,
) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "report.jsonl", "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row, ensure_ascii=False, sort_keys=True))
            handle.write("\n")
    with open(out / "traces.jsonl", "w", encoding="utf-8") as handle:
        for trace in traces:
            handle.write(json.dumps(trace, ensure_ascii=False, sort_keys=True))
            handle.write("\n")
    (out / "aggregate.json").write_text(
        json.dumps(aggregate, indent=2, ensure_ascii=False, sort_keys=True) + "\n",
        encoding="utf-8",
    )
    if figures:
        render_figures(out, rows, aggregate)
    return out


def render_figures(out_dir: str | Path, rows: list[dict], aggregate: dict) -> list[Path]:
    """Render the summary figures next to the delimited report files."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(out_dir)
    written: list[Path] = []

    if aggregate.get("mean_source_distribution"):
        dist = aggregate["mean_source_distribution"]
        fig, ax = plt.subplots(figsize=(5, 3.5))
        labels = ["from LLM", "corrected by IR", "completed by IR"]
        values = [dist["from_llm"], dist["corrected"], dist["completed"]]
        ax.bar(labels, values, color=["#4c72b0", "#dd8452", "#55a868"])
        ax.set_ylabel("fraction of path entries")
        ax.set_ylim(0, 1)
        ax.set_title("Knowledge source distribution")
        fig.tight_layout()
        path = out / "source_distribution.png"
        fig.savefig(path)
        plt.close(fig)
        written.append(path)

    if aggregate.get("mean_counters"):
        counters = aggregate["mean_counters"]
        fig, axes = plt.subplots(1, 2, figsize=(8, 3.5))
        axes[0].bar(
            ["input words (n)", "output words (m)"],
            [counters["input_words"], counters["output_words"]],
            color=["#4c72b0", "#dd8452"],
        )
        axes[0].set_title("Mean words per run")
        axes[1].bar(
            ["rounds (r)", "wall time (t, s)"],
            [counters["rounds"], counters["wall_time_seconds"]],
            color=["#55a868", "#c44e52"],
        )
        axes[1].set_title("Mean rounds and time")
        fig.tight_layout()
        path = out / "efficiency.png"
        fig.savefig(path)
        plt.close(fig)
        written.append(path)

    rounds = [r["counters"]["rounds"] for r in rows if r["error"] is None]
    if rounds:
        fig, ax = plt.subplots(figsize=(5, 3.5))
        upper = max(rounds) + 1
        ax.hist(rounds, bins=range(0, upper + 1), color="#4c72b0", rwidth=0.9)
        ax.set_xlabel("interaction rounds")
        ax.set_ylabel("runs")
        ax.set_title("Rounds per run")
        fig.tight_layout()
        path = out / "rounds_hist.png"
        fig.savefig(path)
        plt.close(fig)
        written.append(path)

    return written
