"""Agreement-based filters around pluggable raters.

Double scoring: each record is rated twice (distinct round tags); records
whose two scores disagree by at least the discrepancy threshold are removed,
the rest keep the mean as their quality score. Domain labeling follows the
same shape with exact label agreement. The raters themselves are external
(wire protocol) or seeded stubs; training them is out of scope here.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

from .documents import DOMAINS, Document
from .util import stable_uniform

# rate(record_id, text, round) -> float in [0, 5]
Rater = Callable[[str, str, int], float]
# label(record_id, text, round) -> str
Labeler = Callable[[str, str, int], str]


@dataclass(frozen=True)
class RatedRecord:
    id: str
    score_round1: float
    score_round2: float
    kept: bool

    @property
    def mean(self) -> float:
        return (self.score_round1 + self.score_round2) / 2

    def to_record(self) -> dict:
        return {"id": self.id, "score_round1": self.score_round1,
                "score_round2": self.score_round2, "kept": self.kept}


@dataclass(frozen=True)
class LabeledRecord:
    id: str
    label_round1: str
    label_round2: str
    kept: bool

    def to_record(self) -> dict:
        return {"id": self.id, "label_round1": self.label_round1,
                "label_round2": self.label_round2, "kept": self.kept}


def double_score_filter(
    docs: Iterable[Document],
    rater: Rater,
    discrepancy_threshold: float = 2.0,
) -> tuple[list[tuple[Document, RatedRecord]], list[tuple[Document, RatedRecord]], list[tuple[Document, Exception]]]:
    """Remove records whose two scores differ by >= discrepancy_threshold.

    Kept documents carry the mean of the two scores as quality_score.
    Swapping the rounds never changes the outcome.
    """
    if discrepancy_threshold <= 0:
        raise ValueError("discrepancy_threshold must be positive")
    kept: list[tuple[Document, RatedRecord]] = []
    removed: list[tuple[Document, RatedRecord]] = []
    errors: list[tuple[Document, Exception]] = []
    for doc in docs:
        try:
            s1 = _checked_score(rater(doc.id, doc.text, 1), doc.id, 1)
            s2 = _checked_score(rater(doc.id, doc.text, 2), doc.id, 2)
        except Exception as exc:
            errors.append((doc, exc))
            continue
        record = RatedRecord(
            id=doc.id, score_round1=s1, score_round2=s2,
            kept=abs(s1 - s2) < discrepancy_threshold,
        )
        if record.kept:
            kept.append((doc.with_quality(record.mean), record))
        else:
            removed.append((doc, record))
    return kept, removed, errors


def _checked_score(score: float, record_id: str, round_no: int) -> float:
    if not isinstance(score, (int, float)) or not (0.0 <= score <= 5.0):
        raise ValueError(f"rater returned {score!r} for {record_id} round {round_no}; expected [0, 5]")
    return float(score)


def two_round_agreement(
    docs: Iterable[Document],
    labeler: Labeler,
) -> tuple[list[tuple[Document, LabeledRecord]], list[tuple[Document, LabeledRecord]], list[tuple[Document, Exception]]]:
    """Keep records whose two labeling rounds agree; attach the label."""
    kept: list[tuple[Document, LabeledRecord]] = []
    removed: list[tuple[Document, LabeledRecord]] = []
    errors: list[tuple[Document, Exception]] = []
    for doc in docs:
        try:
            l1 = str(labeler(doc.id, doc.text, 1))
            l2 = str(labeler(doc.id, doc.text, 2))
        except Exception as exc:
            errors.append((doc, exc))
            continue
        record = LabeledRecord(id=doc.id, label_round1=l1, label_round2=l2, kept=l1 == l2)
        if record.kept:
            kept.append((_attach_label(doc, l1), record))
        else:
            removed.append((doc, record))
    return kept, removed, errors


def _attach_label(doc: Document, label: str) -> Document:
    if label in DOMAINS:
        return replace(doc, domain=label)
    return replace(doc, fine_label=label)


# ------------------------------------------------------------------- stubs


@dataclass(frozen=True)
class StubRater:
    """Seeded stochastic rater: uniform [0, 5] per (seed, id, round).

    Stands in for an LLM-based quality scorer in tests; deterministic for a
    fixed seed.
    """

    seed: int
    identity_note: str = "stub-rater"

    def __call__(self, record_id: str, text: str, round_no: int) -> float:
        return 5.0 * stable_uniform(self.seed, "rate", record_id, round_no)


@dataclass(frozen=True)
class StubLabeler:
    """Seeded labeler with a per-round flip rate over a fixed label set."""

    seed: int
    flip_rate: float = 0.1
    labels: Sequence[str] = DOMAINS

    def true_label(self, record_id: str) -> str:
        return self.labels[_pick(self.seed, record_id, len(self.labels))]

    def __call__(self, record_id: str, text: str, round_no: int) -> str:
        label = self.true_label(record_id)
        if stable_uniform(self.seed, "flip", record_id, round_no) < self.flip_rate:
            others = [l for l in self.labels if l != label]
            label = others[_pick(self.seed, (record_id, round_no), len(others))]
        return label


def _pick(seed: int, key: object, n: int) -> int:
    return int(stable_uniform(seed, "pick", key) * n) % n
