"""Dataset records for evaluation runs.

One JSON object per line: {"id", "question", "gold", optional "hops",
optional "mode" ("short" or "long")}. Gold may be a string or a list of
acceptable alias strings. Records missing a mode inherit the run default.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .config import Mode

__all__ = ["DatasetRecord", "load_dataset"]


@dataclass(frozen=True)
class DatasetRecord:
    id: str
    question: str
    gold: tuple[str, ...]
    task_mode: Mode
    hops: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "gold", tuple(self.gold))
        if not self.question.strip():
            raise ValueError(f"record {self.id!r}: question must be non-empty")
        if not self.gold or any(not g for g in self.gold):
            raise ValueError(f"record {self.id!r}: gold must be non-empty")
        if self.hops is not None and self.hops < 1:
            raise ValueError(f"record {self.id!r}: hops must be positive")


def load_dataset(path: str | Path, default_mode: Mode = Mode.SHORT_FORM) -> list[DatasetRecord]:
    records = []
    seen: set[str] = set()
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            try:
                record_id = str(raw["id"])
                question = str(raw["question"])
                gold = raw["gold"]
            except (TypeError, KeyError) as exc:
                raise ValueError(f"{path}:{line_no}: missing field {exc}") from exc
            if isinstance(gold, str):
                gold_tuple = (gold,)
            elif isinstance(gold, list) and all(isinstance(g, str) for g in gold):
                gold_tuple = tuple(gold)
            else:
                raise ValueError(f"{path}:{line_no}: gold must be a string or list of strings")
            mode = Mode(raw["mode"]) if "mode" in raw else default_mode
            hops = int(raw["hops"]) if "hops" in raw and raw["hops"] is not None else None
            if record_id in seen:
                raise ValueError(f"{path}:{line_no}: duplicate record id {record_id!r}")
            seen.add(record_id)
            try:
                records.append(
                    DatasetRecord(
                        id=record_id, question=question, gold=gold_tuple,
                        task_mode=mode, hops=hops,
                    )
                )
            except ValueError as exc:
                raise ValueError(f"{path}:{line_no}: {exc}") from exc
    if not records:
        raise ValueError(f"{path}: dataset is empty")
    return records
