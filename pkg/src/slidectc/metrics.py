"""Word accuracy and the character-level Accurate Rate."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .errors import InvalidInput


@dataclass(frozen=True)
class EditCounts:
    substitutions: int = 0
    deletions: int = 0
    insertions: int = 0

    def __add__(self, other: "EditCounts") -> "EditCounts":
        return EditCounts(
            self.substitutions + other.substitutions,
            self.deletions + other.deletions,
            self.insertions + other.insertions,
        )

    @property
    def distance(self) -> int:
        return self.substitutions + self.deletions + self.insertions


def edit_counts(truth: Sequence, hyp: Sequence) -> EditCounts:
    """S, D, I of a minimal unit-cost alignment of ``hyp`` against ``truth``.

    On the backtrace, equal-cost moves prefer the diagonal (match or
    substitution), then deletion, then insertion.
    """
    n, m = len(truth), len(hyp)
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(n + 1):
        dist[i][0] = i
    for j in range(m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            diag = dist[i - 1][j - 1] + (truth[i - 1] != hyp[j - 1])
            dist[i][j] = min(diag, dist[i - 1][j] + 1, dist[i][j - 1] + 1)
    s = d = ins = 0
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and dist[i][j] == dist[i - 1][j - 1] + (truth[i - 1] != hyp[j - 1]):
            s += truth[i - 1] != hyp[j - 1]
            i, j = i - 1, j - 1
        elif i > 0 and dist[i][j] == dist[i - 1][j] + 1:
            d += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return EditCounts(s, d, ins)


def _fold(text: str, case_insensitive: bool) -> str:
    return text.lower() if case_insensitive else text


def word_accuracy(pairs: Iterable[tuple[str, str]], case_insensitive: bool = False) -> float:
    pairs = list(pairs)
    if not pairs:
        raise InvalidInput("word accuracy needs at least one pair")
    hits = sum(_fold(t, case_insensitive) == _fold(h, case_insensitive) for t, h in pairs)
    return hits / len(pairs)


def accurate_rate(pairs: Iterable[tuple[str, str]], case_insensitive: bool = False) -> float:
    """(N - S - D - I) / N summed over all pairs; negative when insertions dominate."""
    pairs = list(pairs)
    total = sum(len(t) for t, _ in pairs)
    if total == 0:
        raise InvalidInput("accurate rate is undefined without reference characters")
    counts = EditCounts()
    for t, h in pairs:
        counts = counts + edit_counts(_fold(t, case_insensitive), _fold(h, case_insensitive))
    return (total - counts.distance) / total


@dataclass
class LineRecord:
    line_id: str
    truth: str
    hypothesis: str
    log_score: float
    decoder: str


@dataclass
class EvalReport:
    word_accuracy: float
    accurate_rate: float
    chars_total: int
    substitutions: int
    deletions: int
    insertions: int
    words_total: int
    words_correct: int
    lines: list[LineRecord] = field(default_factory=list)

    @classmethod
    def from_records(cls, records: list[LineRecord], case_insensitive: bool = False) -> "EvalReport":
        if not records:
            raise InvalidInput("no lines to evaluate")
        counts = EditCounts()
        correct = 0
        for r in records:
            t, h = _fold(r.truth, case_insensitive), _fold(r.hypothesis, case_insensitive)
            counts = counts + edit_counts(t, h)
            correct += t == h
        total = sum(len(r.truth) for r in records)
        ar = (total - counts.distance) / total if total else float("nan")
        return cls(
            word_accuracy=correct / len(records),
            accurate_rate=ar,
            chars_total=total,
            substitutions=counts.substitutions,
            deletions=counts.deletions,
            insertions=counts.insertions,
            words_total=len(records),
            words_correct=correct,
            lines=records,
        )

    def summary(self) -> dict:
        return {
            "word_accuracy": self.word_accuracy,
            "accurate_rate": self.accurate_rate,
            "N": self.chars_total,
            "S": self.substitutions,
            "D": self.deletions,
            "I": self.insertions,
            "words_total": self.words_total,
            "words_correct": self.words_correct,
        }
