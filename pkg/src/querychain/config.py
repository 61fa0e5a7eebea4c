"""Run and engine configuration.

RunConfig carries the interaction semantics (round cap, thresholds, task
mode, ablations); EngineConfig adds backend wiring for the CLI. Defaults
follow the evaluated operating point: r_max 5, theta 1.5, alpha 0.35.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import ConfigError

__all__ = [
    "Mode",
    "Ablation",
    "SourceTag",
    "RunConfig",
    "EngineConfig",
    "CREDENTIAL_ENV",
    "load_engine_config",
]

# Environment variable holding the remote LLM credential; never a CLI flag
# so tokens stay out of shell history and process listings.
CREDENTIAL_ENV = "QUERYCHAIN_LLM_TOKEN"


class Mode(str, Enum):
    """Task mode selecting the consistency rule and the reported metric."""

    SHORT_FORM = "short"
    LONG_FORM = "long"


class Ablation(str, Enum):
    NO_VERIFICATION = "no-verification"
    NO_COMPLETION = "no-completion"
    NO_IR = "no-ir"


class SourceTag(str, Enum):
    """Provenance of a correct-path entry's answer."""

    FROM_LLM = "from_llm"
    CORRECTED_BY_IR = "corrected_by_ir"
    COMPLETED_BY_IR = "completed_by_ir"


@dataclass(frozen=True)
class RunConfig:
    r_max: int = 5
    theta: float = 1.5
    alpha: float = 0.35
    mode: Mode = Mode.SHORT_FORM
    ablation: frozenset[Ablation] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "ablation", frozenset(Ablation(a) for a in self.ablation))
        if self.r_max < 1:
            raise ValueError(f"r_max must be positive, got {self.r_max}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")


@dataclass
class EngineConfig:
    """Backend selection and file wiring for one CLI invocation."""

    run: RunConfig = field(default_factory=RunConfig)
    llm: str = "scripted"
    reader: str = "baseline"
    retriever: str = "local"
    corpus_path: str | None = None
    script_path: str | None = None
    examples_path: str | None = None
    llm_endpoint: str | None = None
    retriever_endpoint: str | None = None
    reader_endpoint: str | None = None
    credential_env: str = CREDENTIAL_ENV
    timeout: float = 30.0
    multi_turn: bool = True
    temperature: float = 0.0
    max_reference_chars: int | None = None
    out_dir: str = "out"
    parallel: int = 1

    def validate(self) -> None:
        if self.llm not in ("scripted", "remote"):
            raise ConfigError(f"unknown llm backend {self.llm!r}")
        if self.reader not in ("baseline", "remote"):
            raise ConfigError(f"unknown reader backend {self.reader!r}")
        if self.retriever not in ("local", "remote"):
            raise ConfigError(f"unknown retriever backend {self.retriever!r}")
        if self.llm == "remote" and not self.llm_endpoint:
            raise ConfigError("remote llm backend requires llm_endpoint")
        if self.reader == "remote" and not self.reader_endpoint:
            raise ConfigError("remote reader backend requires reader_endpoint")
        if self.retriever == "remote" and not self.retriever_endpoint:
            raise ConfigError("remote retriever backend requires retriever_endpoint")
        if self.llm == "scripted" and not self.script_path:
            raise ConfigError("scripted llm backend requires script_path")
        needs_corpus = self.retriever == "local" and Ablation.NO_IR not in self.run.ablation
        if needs_corpus and not self.corpus_path:
            raise ConfigError("local retriever requires corpus_path")
        if self.parallel < 1:
            raise ConfigError(f"parallel must be at least 1, got {self.parallel}")


# Config-file keys that map one-to-one onto EngineConfig attributes.
_PLAIN_KEYS = (
    "llm",
    "reader",
    "retriever",
    "corpus_path",
    "script_path",
    "examples_path",
    "llm_endpoint",
    "retriever_endpoint",
    "reader_endpoint",
    "credential_env",
    "timeout",
    "multi_turn",
    "temperature",
    "max_reference_chars",
    "out_dir",
    "parallel",
)
_RUN_KEYS = ("r_max", "theta", "alpha", "mode", "ablation")


def load_engine_config(path: str | Path) -> EngineConfig:
    """Load an EngineConfig from a JSON file.

    Run-level keys (r_max, theta, alpha, mode, ablation) sit at the top
    level next to the backend keys.
    """
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot load config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must hold a JSON object")

    unknown = set(data) - set(_PLAIN_KEYS) - set(_RUN_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    run_kwargs = {}
    for key in _RUN_KEYS:
        if key in data:
            run_kwargs[key] = data[key]
    if "mode" in run_kwargs:
        run_kwargs["mode"] = Mode(run_kwargs["mode"])
    if "ablation" in run_kwargs:
        run_kwargs["ablation"] = frozenset(Ablation(a) for a in run_kwargs["ablation"])
    try:
        run = RunConfig(**run_kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    plain = {key: data[key] for key in _PLAIN_KEYS if key in data}
    return EngineConfig(run=run, **plain)
