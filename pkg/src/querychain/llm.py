"""Prompt assembly and text generation backends.

The first-round prompt instructs the model to construct a global reasoning
chain, shows few-shot example chains, then poses the question. Feedback
rounds send the verification/completion template as a new user turn; the
running conversation supplies the prior chain context in multi-turn mode.

Backends: a deterministic scripted backend for tests and demos (a stateful
cursor over canned generations, never recycling past the end) and a remote
chat service speaking {"messages": [...], "temperature": t} -> {"content"}.
The remote credential comes from an environment variable, never a flag.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import requests

from .chain import parse_coq
from .config import Mode
from .errors import BackendUnavailableError, MalformedExampleError, ScriptExhaustedError

__all__ = [
    "PromptBundle",
    "FIRST_ROUND_INSTRUCTION",
    "LONG_FORM_SUPPLEMENT",
    "build_first_round_prompt",
    "build_feedback_round_prompt",
    "ScriptedBackend",
    "RemoteChatBackend",
    "generate",
    "load_script",
    "load_script_library",
    "load_examples",
]

FIRST_ROUND_INSTRUCTION = (
    "Construct a global reasoning chain for this complex [Question] and answer it. "
    "Decompose the [Question] into retrieval-oriented sub-questions, writing each as "
    '"[Query k]: <sub-question>" followed by "[Answer k]: <answer>" when you know the '
    'answer. If a sub-question cannot be answered from your own knowledge, write '
    '"[Unsolved Query]" on the next line and stop planning there. When the chain is '
    'complete, end with "[Final Answer]: <answer>".'
)
LONG_FORM_SUPPLEMENT = (
    " The [Final Answer] must be a detailed long-form paragraph, not a short phrase."
)


@dataclass(frozen=True)
class PromptBundle:
    """Everything needed to build one round's prompt."""

    system_instruction: str
    few_shot_examples: tuple[tuple[str, str], ...]
    question: str
    feedback_prefix: str | None = None


def build_first_round_prompt(
    question: str,
    examples: Sequence[tuple[str, str]] = (),
    task_mode: Mode = Mode.SHORT_FORM,
) -> str:
    """Instruction, then example chains, then the question block.

    Every example chain must parse under the canonical grammar; a bad
    example is a configuration error, not model noise.
    """
    instruction = FIRST_ROUND_INSTRUCTION
    if task_mode is Mode.LONG_FORM:
        instruction += LONG_FORM_SUPPLEMENT
    blocks = [instruction]
    for example_question, chain_text in examples:
        report = parse_coq(chain_text)
        if report.chain is None:
            detail = "; ".join(v.message for v in report.violations if v.fatal)
            raise MalformedExampleError(
                f"few-shot example {example_question!r} does not parse: {detail}"
            )
        blocks.append(f"[Question]: {example_question}\n{chain_text}")
    blocks.append(f"[Question]: {question}")
    return "\n\n".join(blocks)


def build_feedback_round_prompt(bundle: PromptBundle) -> str:
    """The user turn for a feedback round.

    The verify/complete template already instructs the model to continue
    the chain for the original question, so the turn is the template
    itself; prior CoQ context travels in the conversation history.
    """
    if bundle.feedback_prefix is None:
        raise ValueError("feedback round requires a feedback_prefix")
    return bundle.feedback_prefix


class ScriptedBackend:
    """Deterministic test double replaying canned generations in order."""

    def __init__(self, generations: Sequence[str]):
        self._generations = list(generations)
        self._cursor = 0
        self.requests: list[list[dict]] = []

    @property
    def cursor(self) -> int:
        return self._cursor

    @property
    def remaining(self) -> int:
        return len(self._generations) - self._cursor

    def generate(self, messages: list[dict]) -> str:
        if self._cursor >= len(self._generations):
            raise ScriptExhaustedError(
                f"script exhausted after {len(self._generations)} generations"
            )
        # Copy: the caller keeps mutating its running message list.
        self.requests.append([dict(m) for m in messages])
        text = self._generations[self._cursor]
        self._cursor += 1
        return text


class RemoteChatBackend:
    """HTTP client for a chat completion service.

    Decoding defaults to temperature 0 for reproducibility. The bearer
    token is read from the configured environment variable at request time.
    """

    def __init__(
        self,
        endpoint: str,
        timeout: float = 30.0,
        temperature: float = 0.0,
        credential_env: str = "QUERYCHAIN_LLM_TOKEN",
        session=None,
    ):
        self._endpoint = endpoint
        self._timeout = timeout
        self._temperature = temperature
        self._credential_env = credential_env
        self._session = session if session is not None else requests.Session()

    def generate(self, messages: list[dict]) -> str:
        headers = {}
        token = os.environ.get(self._credential_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        try:
            response = self._session.post(
                self._endpoint,
                json={"messages": messages, "temperature": self._temperature},
                headers=headers,
                timeout=self._timeout,
            )
            response.raise_for_status()
            payload = response.json()
        except requests.RequestException as exc:
            raise BackendUnavailableError(f"llm request failed: {exc}") from exc
        except ValueError as exc:
            raise BackendUnavailableError(f"llm returned invalid JSON: {exc}") from exc
        content = payload.get("content")
        if not isinstance(content, str):
            raise BackendUnavailableError("llm response lacks a content string")
        return content


def generate(backend, prompt: str) -> str:
    """Single-prompt convenience wrapper over any backend."""
    return backend.generate([{"role": "user", "content": prompt}])


def load_script(path: str | Path) -> list[str]:
    """Flat script file: one JSON record per line, {"text": generation}."""
    generations = []
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            if isinstance(record, str):
                generations.append(record)
            elif isinstance(record, dict) and isinstance(record.get("text"), str):
                generations.append(record["text"])
            else:
                raise ValueError(f"{path}:{line_no}: expected a string or a text field")
    return generations


def load_script_library(path: str | Path) -> dict[str, list[str]]:
    """Keyed script file for evaluation: {"id", "generations": [...]} lines."""
    library: dict[str, list[str]] = {}
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            try:
                key = str(record["id"])
                generations = record["generations"]
            except (TypeError, KeyError) as exc:
                raise ValueError(f"{path}:{line_no}: missing field {exc}") from exc
            if not isinstance(generations, list) or not all(isinstance(g, str) for g in generations):
                raise ValueError(f"{path}:{line_no}: generations must be a list of strings")
            if key in library:
                raise ValueError(f"{path}:{line_no}: duplicate script id {key!r}")
            library[key] = generations
    return library


def load_examples(path: str | Path) -> list[tuple[str, str]]:
    """Few-shot example file: {"question", "chain"} JSON lines."""
    examples = []
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            try:
                examples.append((str(record["question"]), str(record["chain"])))
            except (TypeError, KeyError) as exc:
                raise ValueError(f"{path}:{line_no}: missing field {exc}") from exc
    return examples
