"""Evaluation metrics: cover-EM, ROUGE-L, source distribution, step counts.

All functions are pure. Normalization for text metrics reuses the query
normalization rules (lowercase, whitespace collapse, terminal punctuation
strip) applied to full strings, so containment is insensitive to case and
spacing but keeps interior punctuation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import TYPE_CHECKING

from .chain import normalize_query
from .config import SourceTag
from .errors import EmptyPathError

if TYPE_CHECKING:  # pragma: no cover - type hints only, avoids an import cycle
    from .engine import CorrectPath, TreeOfReasoning

__all__ = [
    "EfficiencyCounters",
    "SourceDistribution",
    "cover_em",
    "rouge_l",
    "source_distribution",
    "reasoning_steps",
]


@dataclass(frozen=True)
class EfficiencyCounters:
    """Cost of one run: words in (n), words out (m), rounds (r), seconds (t)."""

    input_words: int = 0
    output_words: int = 0
    rounds: int = 0
    wall_time_seconds: float = 0.0

    def __post_init__(self):
        if self.input_words < 0 or self.output_words < 0 or self.rounds < 0:
            raise ValueError("word and round counters must be non-negative")
        if self.wall_time_seconds < 0:
            raise ValueError("wall time must be non-negative")


@dataclass(frozen=True)
class SourceDistribution:
    """Fraction of correct-path entries per knowledge source; sums to 1."""

    from_llm: float
    corrected: float
    completed: float


def cover_em(generated: str, gold: str) -> int:
    """1 iff the normalized gold answer is a substring of the generation."""
    return 1 if normalize_query(gold) in normalize_query(generated) else 0


def _lcs_length(a: list[str], b: list[str]) -> int:
    # Single-row dynamic program; O(len(a) * len(b)) time, O(len(b)) space.
    if not a or not b:
        return 0
    row = [0] * (len(b) + 1)
    for x in a:
        prev_diag = 0
        for j, y in enumerate(b, start=1):
            prev_row = row[j]
            if x == y:
                row[j] = prev_diag + 1
            elif row[j - 1] > row[j]:
                row[j] = row[j - 1]
            prev_diag = prev_row
    return row[len(b)]


def rouge_l(candidate: str, reference: str) -> float:
    """ROUGE-L F1 over normalized whitespace tokens.

    Computed as 2 * lcs / (|candidate| + |reference|), which equals the
    F1 of LCS precision and recall. 0.0 when either side is empty or the
    sequences share no subsequence.
    """
    cand = normalize_query(candidate).split()
    ref = normalize_query(reference).split()
    if not cand or not ref:
        return 0.0
    lcs = _lcs_length(cand, ref)
    if lcs == 0:
        return 0.0
    return (2 * lcs) / (len(cand) + len(ref))


def source_distribution(path: "CorrectPath") -> SourceDistribution:
    """Fractions of entries answered by the LLM, corrected, or completed."""
    total = len(path.entries)
    if total == 0:
        raise EmptyPathError("source distribution requires a non-empty correct path")
    counts = {tag: 0 for tag in SourceTag}
    for entry in path.entries:
        counts[SourceTag(entry.source)] += 1
    return SourceDistribution(
        from_llm=counts[SourceTag.FROM_LLM] / total,
        corrected=counts[SourceTag.CORRECTED_BY_IR] / total,
        completed=counts[SourceTag.COMPLETED_BY_IR] / total,
    )


def reasoning_steps(tree: "TreeOfReasoning") -> int:
    """Total chain nodes across all branches; restarts add steps."""
    return sum(len(branch.chain.nodes) for branch in tree.branches)
