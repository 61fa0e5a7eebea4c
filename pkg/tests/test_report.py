"""Evaluation sweep tests: per-question isolation, aggregation arithmetic,
output files, and figure rendering.
"""

import json

import pytest

from querychain.config import Ablation, EngineConfig, RunConfig
from querychain.data import DatasetRecord
from querychain.errors import ConfigError
from querychain.report import aggregate_rows, evaluate_dataset, render_figures, write_report

CHAIN_Q1 = (
    "[Query 1]: Who directed Jaws?\n"
    "[Answer 1]: Steven Spielberg\n"
    "[Final Answer]: Steven Spielberg"
)
TRACING_Q1 = "[Final Content]: Jaws was directed by Steven Spielberg."
CHAIN_Q2 = (
    "[Query 1]: In what year was the Eiffel Tower completed?\n"
    "[Answer 1]: 1889\n"
    "[Final Answer]: 1889"
)
TRACING_Q2 = "[Final Content]: The Eiffel Tower was completed in 1889."


@pytest.fixture
def config(tmp_path):
    corpus = tmp_path / "corpus.jsonl"
    corpus.write_text(
        json.dumps({"id": "d1", "title": "Jaws", "text": "Jaws was directed by Steven Spielberg in 1975"})
        + "\n"
        + json.dumps({"id": "d4", "title": "Eiffel", "text": "The Eiffel Tower was completed in 1889 in Paris"})
        + "\n"
    )
    scripts = tmp_path / "scripts.jsonl"
    scripts.write_text(
        json.dumps({"id": "q1", "generations": [CHAIN_Q1, TRACING_Q1]})
        + "\n"
        + json.dumps({"id": "q2", "generations": [CHAIN_Q2, TRACING_Q2]})
        + "\n"
    )
    return EngineConfig(
        corpus_path=str(corpus),
        script_path=str(scripts),
        out_dir=str(tmp_path / "out"),
    )


RECORDS = [
    DatasetRecord("q1", "Who directed Jaws?", ("Steven Spielberg",), RunConfig().mode, 1),
    DatasetRecord("q2", "When was the Eiffel Tower completed?", ("1889",), RunConfig().mode, 1),
]


class TestEvaluateDataset:
    def test_full_sweep(self, config):
        ticks = iter(float(i) for i in range(10000))
        traces, rows, aggregate = evaluate_dataset(RECORDS, config, clock=lambda: next(ticks))
        assert len(traces) == len(rows) == 2
        assert aggregate["count"] == 2
        assert aggregate["errors"] == 0
        assert aggregate["by_mode"]["short"]["mean_score"] == 1.0
        assert aggregate["by_mode"]["short"]["count"] == 2

    def test_order_preserved_under_parallelism(self, config):
        config.parallel = 2
        traces, rows, _ = evaluate_dataset(RECORDS, config)
        assert [t["id"] for t in traces] == ["q1", "q2"]
        assert [r["id"] for r in rows] == ["q1", "q2"]

    def test_missing_script_becomes_error_row(self, config):
        records = RECORDS + [
            DatasetRecord("q3", "Unscripted question?", ("x",), RunConfig().mode, None)
        ]
        traces, rows, aggregate = evaluate_dataset(records, config)
        assert aggregate["count"] == 3
        assert aggregate["errors"] == 1
        assert rows[2]["error"] is not None
        assert "no script" in rows[2]["error"]
        # The healthy rows still scored.
        assert aggregate["by_mode"]["short"]["count"] == 2

    def test_aborted_run_becomes_error_row_not_crash(self, config, tmp_path):
        scripts = tmp_path / "bad_scripts.jsonl"
        scripts.write_text(
            json.dumps({"id": "q1", "generations": ["no markers", "still none"]}) + "\n"
        )
        config.script_path = str(scripts)
        traces, rows, aggregate = evaluate_dataset(RECORDS[:1], config)
        assert aggregate["errors"] == 1
        assert rows[0]["error"] is not None

    def test_empty_dataset_rejected(self, config):
        with pytest.raises(ConfigError):
            evaluate_dataset([], config)

    def test_rows_recompute_from_traces(self, config):
        from querychain.traces import row_from_trace

        traces, rows, aggregate = evaluate_dataset(RECORDS, config)
        recomputed = [row_from_trace(t) for t in traces]
        assert recomputed == rows
        assert aggregate_rows(recomputed) == aggregate


class TestAggregateRows:
    def row(self, **overrides):
        base = {
            "id": "q",
            "question": "Q?",
            "gold": ["a"],
            "mode": "short",
            "prediction": "a",
            "metric": "cover_em",
            "score": 1.0,
            "reasoning_steps": 2,
            "skc": 1,
            "source_distribution": {"from_llm": 1.0, "corrected": 0.0, "completed": 0.0},
            "counters": {"input_words": 10, "output_words": 5, "rounds": 1, "wall_time_seconds": 0.5},
            "hops": 2,
            "ablation": [],
            "error": None,
        }
        base.update(overrides)
        return base

    def test_means(self):
        rows = [self.row(score=1.0), self.row(id="q2", score=0.0, hops=3)]
        aggregate = aggregate_rows(rows)
        assert aggregate["by_mode"]["short"]["mean_score"] == 0.5
        assert aggregate["mean_counters"]["rounds"] == 1.0
        assert aggregate["per_hop"] == {
            "2": {"count": 1, "mean_score": 1.0},
            "3": {"count": 1, "mean_score": 0.0},
        }

    def test_error_rows_excluded_from_means(self):
        rows = [self.row(), self.row(id="bad", score=0.0, error="boom")]
        aggregate = aggregate_rows(rows)
        assert aggregate["errors"] == 1
        assert aggregate["by_mode"]["short"]["count"] == 1
        assert aggregate["by_mode"]["short"]["mean_score"] == 1.0

    def test_modes_aggregated_separately(self):
        rows = [
            self.row(),
            self.row(id="q2", mode="long", metric="rouge_l", score=0.4),
        ]
        aggregate = aggregate_rows(rows)
        assert aggregate["by_mode"]["short"]["metric"] == "cover_em"
        assert aggregate["by_mode"]["long"]["metric"] == "rouge_l"
        assert aggregate["by_mode"]["long"]["mean_score"] == 0.4

    def test_ablation_union(self):
        rows = [self.row(ablation=["no-verification"]), self.row(id="q2", ablation=["no-ir"])]
        assert aggregate_rows(rows)["ablation"] == ["no-ir", "no-verification"]

    def test_pure(self):
        rows = [self.row()]
        snapshot = json.dumps(rows, sort_keys=True)
        aggregate_rows(rows)
        assert json.dumps(rows, sort_keys=True) == snapshot


class TestWriteReport:
    def test_files_written(self, config, tmp_path):
        traces, rows, aggregate = evaluate_dataset(RECORDS, config)
        out = write_report(config.out_dir, traces, rows, aggregate)
        assert (out / "report.jsonl").exists()
        assert (out / "traces.jsonl").exists()
        assert (out / "aggregate.json").exists()
        assert (out / "source_distribution.png").stat().st_size > 0
        assert (out / "efficiency.png").stat().st_size > 0
        assert (out / "rounds_hist.png").stat().st_size > 0
        reloaded = json.loads((out / "aggregate.json").read_text())
        assert reloaded == aggregate

    def test_figures_optional(self, config):
        traces, rows, aggregate = evaluate_dataset(RECORDS, config)
        out = write_report(config.out_dir + "_nofig", traces, rows, aggregate, figures=False)
        assert not (out / "source_distribution.png").exists()

    def test_render_figures_handles_error_only_rows(self, tmp_path):
        rows = [
            {
                "id": "q",
                "error": "boom",
                "counters": {"input_words": 0, "output_words": 0, "rounds": 0, "wall_time_seconds": 0.0},
            }
        ]
        aggregate = {"mean_source_distribution": None, "mean_counters": None}
        written = render_figures(tmp_path, rows, aggregate)
        assert written == []
