"""Command-line entry point.

Subcommands:
  ask     answer one question, print the final content with references,
          and write a trace file
  eval    run a dataset, write report.jsonl / aggregate.json / traces.jsonl
          and summary figures
  ablate  eval with ablation switches applied and labeled

Flag precedence: built-in defaults, then the --config JSON file, then
explicit flags. The remote LLM credential is read from the environment
variable named by the config (QUERYCHAIN_LLM_TOKEN by default).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace as dc_replace
from pathlib import Path

from .config import Ablation, EngineConfig, Mode, RunConfig, load_engine_config
from .data import load_dataset
from .errors import ConfigError, QueryChainError
from .pipeline import (
    answer_question,
    build_llm,
    build_reader,
    build_retriever,
    load_examples_if_configured,
)
from .report import evaluate_dataset, write_report
from .tracing import render_final_content
from .traces import build_trace_record, write_traces

__all__ = ["main", "cmd_ask", "cmd_eval", "cmd_ablate", "build_parser"]

logger = logging.getLogger(__name__)


def _add_shared_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file; flags override it")
    parser.add_argument("--corpus", help="corpus JSONL file for the local retriever")
    parser.add_argument("--mode", choices=["short", "long"], help="task mode")
    parser.add_argument("--theta", type=float, help="reader confidence gate (default 1.5)")
    parser.add_argument("--alpha", type=float, help="long-form consistency gate (default 0.35)")
    parser.add_argument("--rmax", type=int, help="interaction round cap (default 5)")
    parser.add_argument("--no-verification", action="store_true", help="disable answer correction")
    parser.add_argument("--no-completion", action="store_true", help="disable unsolved completion")
    parser.add_argument("--no-ir", action="store_true", help="disable retrieval entirely")
    parser.add_argument("--out", help="output directory (default out)")
    parser.add_argument("--llm", choices=["scripted", "remote"], help="LLM backend")
    parser.add_argument("--reader", choices=["baseline", "remote"], help="reader backend")
    parser.add_argument("--retriever", choices=["local", "remote"], help="retriever backend")
    parser.add_argument("--script", help="script file for the scripted LLM backend")
    parser.add_argument("--examples", help="few-shot examples JSONL file")
    parser.add_argument("--single-turn", action="store_true", help="drop conversation history between rounds")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="querychain",
        description="Chain-of-query reasoning with retrieval-backed verification",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ask = sub.add_parser("ask", help="answer a single question")
    ask.add_argument("question", help="the question to answer")
    _add_shared_flags(ask)

    for name, help_text in (
        ("eval", "evaluate a dataset"),
        ("ablate", "evaluate a dataset under ablation switches"),
    ):
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--dataset", required=True, help="dataset JSONL file")
        cmd.add_argument("--parallel", type=int, help="concurrent question runs (default 1)")
        _add_shared_flags(cmd)

    return parser


def _build_config(args: argparse.Namespace) -> EngineConfig:
    config = load_engine_config(args.config) if args.config else EngineConfig()

    run_overrides = {}
    if args.theta is not None:
        run_overrides["theta"] = args.theta
    if args.alpha is not None:
        run_overrides["alpha"] = args.alpha
    if args.rmax is not None:
        run_overrides["r_max"] = args.rmax
    if args.mode is not None:
        run_overrides["mode"] = Mode(args.mode)
    ablations = set(config.run.ablation)
    if args.no_verification:
        ablations.add(Ablation.NO_VERIFICATION)
    if args.no_completion:
        ablations.add(Ablation.NO_COMPLETION)
    if args.no_ir:
        ablations.add(Ablation.NO_IR)
    run_overrides["ablation"] = frozenset(ablations)
    try:
        config.run = dc_replace(config.run, **run_overrides)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    if args.corpus is not None:
        config.corpus_path = args.corpus
    if args.out is not None:
        config.out_dir = args.out
    if args.llm is not None:
        config.llm = args.llm
    if args.reader is not None:
        config.reader = args.reader
    if args.retriever is not None:
        config.retriever = args.retriever
    if args.script is not None:
        config.script_path = args.script
    if args.examples is not None:
        config.examples_path = args.examples
    if args.single_turn:
        config.multi_turn = False
    if getattr(args, "parallel", None) is not None:
        config.parallel = args.parallel

    config.validate()
    return config


def cmd_ask(question: str, config: EngineConfig) -> int:
    retriever = build_retriever(config)
    reader = build_reader(config)
    llm = build_llm(config)
    examples = load_examples_if_configured(config)

    result = answer_question(
        question,
        llm,
        retriever,
        reader,
        config.run,
        examples=examples,
        multi_turn=config.multi_turn,
        max_reference_chars=config.max_reference_chars,
    )

    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_traces([build_trace_record(result)], out / "trace.jsonl")

    print(render_final_content(result.final_content))
    if not result.path.entries:
        print("\nnote: the correct path is empty; no node could be verified against the corpus.")
    if result.error is not None:
        print(f"error: {result.error}", file=sys.stderr)
        return 1
    return 0


def _run_eval(args: argparse.Namespace, label: str) -> int:
    config = _build_config(args)
    default_mode = config.run.mode
    records = load_dataset(args.dataset, default_mode=default_mode)
    traces, rows, aggregate = evaluate_dataset(records, config)
    aggregate["label"] = label
    write_report(config.out_dir, traces, rows, aggregate)
    print(json.dumps(aggregate, indent=2, ensure_ascii=False, sort_keys=True))
    return 0


def cmd_eval(dataset_path: str, config: EngineConfig) -> int:
    """Programmatic equivalent of the eval subcommand."""
    records = load_dataset(dataset_path, default_mode=config.run.mode)
    traces, rows, aggregate = evaluate_dataset(records, config)
    aggregate["label"] = "eval"
    write_report(config.out_dir, traces, rows, aggregate)
    print(json.dumps(aggregate, indent=2, ensure_ascii=False, sort_keys=True))
    return 0


def cmd_ablate(dataset_path: str, config: EngineConfig) -> int:
    """Programmatic equivalent of the ablate subcommand."""
    records = load_dataset(dataset_path, default_mode=config.run.mode)
    traces, rows, aggregate = evaluate_dataset(records, config)
    aggregate["label"] = "ablate:" + ",".join(sorted(a.value for a in config.run.ablation))
    write_report(config.out_dir, traces, rows, aggregate)
    print(json.dumps(aggregate, indent=2, ensure_ascii=False, sort_keys=True))
    return 0


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "ask":
            return cmd_ask(args.question, _build_config(args))
        if args.command == "eval":
            return _run_eval(args, "eval")
        if args.command == "ablate":
            config_label = []
            if args.no_verification:
                config_label.append(Ablation.NO_VERIFICATION.value)
            if args.no_completion:
                config_label.append(Ablation.NO_COMPLETION.value)
            if args.no_ir:
                config_label.append(Ablation.NO_IR.value)
            return _run_eval(args, "ablate:" + ",".join(config_label))
        parser.error(f"unknown command {args.command!r}")
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except QueryChainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
