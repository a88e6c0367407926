"""Immutable record types shared by every pipeline stage.

Validation happens at construction so downstream stages never see a
malformed record: a Dialogue with broken role alternation is rejected here,
not discovered mid-scoring.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any, Mapping

from .tokenizer import TokenizerConfig, DEFAULT_TOKENIZER, count_tokens, detect_language

LANGUAGES = ("zh", "en", "other")
DOMAINS = ("medical", "general")
ROLES = ("user", "assistant")


@dataclass(frozen=True)
class Document:
    """One pretraining text record.

    token_count must agree with the configured tokenizer; use make_document
    to compute it. extra carries unknown fields preserved on passthrough.
    """

    id: str
    text: str
    language: str
    domain: str
    token_count: int
    source: str
    quality_score: float | None = None
    fine_label: str | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("document id must be non-empty")
        if self.language not in LANGUAGES:
            raise ValueError(f"unknown language {self.language!r} for document {self.id}")
        if self.domain not in DOMAINS:
            raise ValueError(f"unknown domain {self.domain!r} for document {self.id}")
        if not isinstance(self.token_count, int) or self.token_count < 0:
            raise ValueError(f"token_count must be a non-negative integer, got {self.token_count!r}")
        if self.quality_score is not None and not (0.0 <= self.quality_score <= 5.0):
            raise ValueError(f"quality_score {self.quality_score!r} outside [0, 5] for document {self.id}")

    def with_quality(self, score: float) -> "Document":
        return replace(self, quality_score=score)


def make_document(
    id: str,
    text: str,
    *,
    domain: str,
    source: str,
    language: str | None = None,
    quality_score: float | None = None,
    fine_label: str | None = None,
    extra: Mapping[str, Any] | None = None,
    tokenizer: TokenizerConfig = DEFAULT_TOKENIZER,
) -> Document:
    """Build a Document, computing token_count (and language if omitted)."""
    if language is None:
        language = detect_language(text) if text else "other"
    return Document(
        id=id,
        text=text,
        language=language,
        domain=domain,
        token_count=count_tokens(text, tokenizer),
        source=source,
        quality_score=quality_score,
        fine_label=fine_label,
        extra=dict(extra) if extra else {},
    )


@dataclass(frozen=True)
class DialogueTurn:
    role: str
    text: str
    turn_index: int  # 1-based position within the dialogue

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if not self.text:
            raise ValueError(f"turn {self.turn_index} has empty text")
        if self.turn_index < 1:
            raise ValueError(f"turn_index must be 1-based, got {self.turn_index}")


@dataclass(frozen=True)
class Dialogue:
    """Multi-turn conversation; roles alternate starting with the user."""

    id: str
    turns: tuple[DialogueTurn, ...]
    per_turn_scores: tuple[float, ...] | None = None
    final_score: float | None = None
    extra: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("dialogue id must be non-empty")
        if not self.turns:
            raise ValueError(f"dialogue {self.id} has no turns")
        for pos, turn in enumerate(self.turns, start=1):
            if turn.turn_index != pos:
                raise ValueError(
                    f"dialogue {self.id}: turn_index {turn.turn_index} at position {pos}"
                )
            expected = ROLES[(pos - 1) % 2]
            if turn.role != expected:
                raise ValueError(
                    f"dialogue {self.id}: turn {pos} has role {turn.role!r}, expected {expected!r}"
                )
        if self.final_score is not None and self.per_turn_scores:
            mean = sum(self.per_turn_scores) / len(self.per_turn_scores)
            if not math.isclose(self.final_score, mean, rel_tol=0.0, abs_tol=1e-9):
                raise ValueError(
                    f"dialogue {self.id}: final_score {self.final_score} is not the mean "
                    f"of per_turn_scores ({mean})"
                )

    @property
    def assistant_turns(self) -> tuple[DialogueTurn, ...]:
        return tuple(t for t in self.turns if t.role == "assistant")

    def with_scores(self, per_turn: list[float]) -> "Dialogue":
        mean = sum(per_turn) / len(per_turn) if per_turn else None
        return replace(self, per_turn_scores=tuple(per_turn), final_score=mean)


def dialogue_from_pairs(id: str, exchanges: list[tuple[str, str]]) -> Dialogue:
    """Convenience builder from (user_text, assistant_text) exchange pairs."""
    turns: list[DialogueTurn] = []
    for user_text, assistant_text in exchanges:
        turns.append(DialogueTurn("user", user_text, len(turns) + 1))
        turns.append(DialogueTurn("assistant", assistant_text, len(turns) + 1))
    return Dialogue(id=id, turns=tuple(turns))
