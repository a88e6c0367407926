"""SFT data selection: complexity x quality scoring and dialogue filtering.

Single-turn records keep s = complexity * quality against a threshold.

Multi-turn dialogues are additionally gated on how much conversation history
helps predict each assistant turn. For the i-th assistant turn, the
conditioned score is its per-token average negative log-likelihood given the
rendered history, the direct score drops the history, and their ratio
cf = conditioned / direct classifies the turn: cf > 1 means history hurt
(the exchanges are barely related), cf well below 1 means the history
practically contains the turn already (redundancy). Both bounds of the
acceptance window are configuration, defaulting to [0.3, 1.0].

History semantics: the history of assistant turn i is every turn of the
*previous* exchanges, rendered as "role: text" lines joined by newlines. The
current exchange's user query is part of the sample being scored, not of its
history, so the first assistant turn has empty history and cf identically
1. Only assistant turns are scored; user turns condition, they are never
scored.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

from .documents import Dialogue, DialogueTurn
from .scoring import ScorerBackend
from .tokenizer import tokenize
from .util import stable_u64

REASON_LOW_CORRELATION = "too-low-correlation"
REASON_REDUNDANCY = "redundancy"
REASON_LOW_QUALITY = "low-quality"


class SelectionError(Exception):
    pass


@dataclass(frozen=True)
class InstanceScore:
    complexity: float
    quality: float
    combined: float

    def __post_init__(self) -> None:
        if self.complexity < 0 or self.quality < 0:
            raise ValueError("complexity and quality must be non-negative")
        if self.combined != self.complexity * self.quality:
            raise ValueError("combined must equal complexity * quality exactly")

    @classmethod
    def of(cls, complexity: float, quality: float) -> "InstanceScore":
        return cls(complexity=complexity, quality=quality, combined=complexity * quality)


@dataclass(frozen=True)
class HistoryInfluence:
    conditioned: float
    direct: float
    cf: float

    def __post_init__(self) -> None:
        if self.conditioned < 0 or self.direct <= 0:
            raise ValueError("scores must be positive per-token average losses")
        if self.cf != self.conditioned / self.direct:
            raise ValueError("cf must equal conditioned / direct exactly")


InstanceScorer = Callable[[str, str], InstanceScore]


_QUALITY_TABLE = (0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0)


def reference_instance_scorer(instruction: str, response: str) -> InstanceScore:
    """Stub scorer for tests and dry runs; NOT a trained quality model.

    complexity = distinct-token count of the instruction / 10, quality = a
    fixed table lookup keyed by the response hash. Deterministic, and
    deliberately simplistic: real deployments plug in trained scorers.
    """
    complexity = len(set(tokenize(instruction))) / 10
    quality = _QUALITY_TABLE[stable_u64("quality-stub", response) % len(_QUALITY_TABLE)]
    return InstanceScore.of(complexity, quality)


@dataclass(frozen=True)
class SelectionConfig:
    scorer: ScorerBackend
    s_threshold: float = 0.0
    cf_low: float = 0.3
    cf_high: float = 1.0
    instance_scorer: InstanceScorer = reference_instance_scorer
    average_all_turns: bool = False  # include user turns in the s average

    def __post_init__(self) -> None:
        if not (0 < self.cf_low < self.cf_high):
            raise ValueError("need 0 < cf_low < cf_high")


def render_history(turns: Iterable[DialogueTurn]) -> str:
    """Fixed history serialization: 'role: text' lines joined by newlines."""
    return "\n".join(f"{t.role}: {t.text}" for t in turns)


def _assistant_turn(dialogue: Dialogue, i: int) -> tuple[DialogueTurn, int]:
    """Resolve the i-th assistant turn (1-based) and its position."""
    assistants = [(pos, t) for pos, t in enumerate(dialogue.turns) if t.role == "assistant"]
    if not 1 <= i <= len(assistants):
        raise SelectionError(
            f"dialogue {dialogue.id} has {len(assistants)} assistant turns, no turn {i}"
        )
    pos, turn = assistants[i - 1]
    return turn, pos


def _history_text(dialogue: Dialogue, assistant_pos: int) -> str:
    # History = turns of completed exchanges only: everything before the
    # current exchange's user query (the query belongs to the sample).
    exchange_start = assistant_pos - 1 if assistant_pos >= 1 else 0
    return render_history(dialogue.turns[:exchange_start])


def conditioned_score(dialogue: Dialogue, i: int, scorer: ScorerBackend) -> float:
    """Per-token average NLL of assistant turn i given its rendered history."""
    turn, pos = _assistant_turn(dialogue, i)
    history = _history_text(dialogue, pos)
    return scorer.sequence_logprobs(history, turn.text).mean_nll


def direct_score(dialogue: Dialogue, i: int, scorer: ScorerBackend) -> float:
    """Per-token average NLL of assistant turn i with no history at all."""
    turn, _ = _assistant_turn(dialogue, i)
    return scorer.sequence_logprobs("", turn.text).mean_nll


def history_influence(dialogue: Dialogue, i: int, scorer: ScorerBackend) -> HistoryInfluence:
    conditioned = conditioned_score(dialogue, i, scorer)
    direct = direct_score(dialogue, i, scorer)
    if direct == 0.0:
        raise SelectionError(
            f"dialogue {dialogue.id} turn {i}: direct score is zero (certain sequence)"
        )
    return HistoryInfluence(conditioned=conditioned, direct=direct, cf=conditioned / direct)


# ------------------------------------------------------------------ selection


@dataclass(frozen=True)
class TurnScore:
    i: int
    conditioned: float
    direct: float
    cf: float
    s: float

    def to_record(self) -> dict:
        return {"i": self.i, "conditioned": self.conditioned, "direct": self.direct,
                "cf": self.cf, "s": self.s}


@dataclass(frozen=True)
class DialogueDecision:
    dialogue: Dialogue
    per_turn: tuple[TurnScore, ...]
    final_score: float
    decision: str  # "keep" | "drop"
    reason: str | None
    scorer_identity: str

    def to_record(self) -> dict:
        return {
            "id": self.dialogue.id,
            "per_turn": [t.to_record() for t in self.per_turn],
            "final_score": self.final_score,
            "decision": self.decision,
            "reason": self.reason,
            "scorer": self.scorer_identity,
        }


def _instruction_for(dialogue: Dialogue, assistant_pos: int) -> str:
    # The exchange's user query; alternation guarantees it directly precedes.
    return dialogue.turns[assistant_pos - 1].text if assistant_pos >= 1 else ""


def select_single_turn(
    dialogues: Iterable[Dialogue],
    instance_scorer: InstanceScorer,
    s_threshold: float,
) -> tuple[list[tuple[Dialogue, InstanceScore]], list[tuple[Dialogue, InstanceScore]], list[tuple[Dialogue, Exception]]]:
    """Keep records whose s = complexity * quality clears the threshold.

    Both outputs carry their scores; scorer failures land in the error sink
    instead of aborting the run.
    """
    kept: list[tuple[Dialogue, InstanceScore]] = []
    dropped: list[tuple[Dialogue, InstanceScore]] = []
    errors: list[tuple[Dialogue, Exception]] = []
    for dlg in dialogues:
        try:
            turn, pos = _assistant_turn(dlg, 1)
            score = instance_scorer(_instruction_for(dlg, pos), turn.text)
        except Exception as exc:
            errors.append((dlg, exc))
            continue
        (kept if score.combined >= s_threshold else dropped).append((dlg, score))
    return kept, dropped, errors


def score_dialogue(dialogue: Dialogue, config: SelectionConfig) -> DialogueDecision:
    """Score every assistant turn and decide keep/drop for one dialogue."""
    per_turn: list[TurnScore] = []
    assistants = dialogue.assistant_turns
    for i in range(1, len(assistants) + 1):
        turn, pos = _assistant_turn(dialogue, i)
        cf = history_influence(dialogue, i, config.scorer)
        s = config.instance_scorer(_instruction_for(dialogue, pos), turn.text)
        per_turn.append(TurnScore(i=i, conditioned=cf.conditioned, direct=cf.direct,
                                  cf=cf.cf, s=s.combined))
    if config.average_all_turns:
        user_scores = []
        for pos, t in enumerate(dialogue.turns):
            if t.role == "user":
                prev = dialogue.turns[pos - 1].text if pos >= 1 else ""
                user_scores.append(config.instance_scorer(prev, t.text).combined)
        pool = [t.s for t in per_turn] + user_scores
    else:
        pool = [t.s for t in per_turn]
    final_score = sum(pool) / len(pool) if pool else 0.0

    decision, reason = "keep", None
    for t in per_turn:
        if t.cf > config.cf_high:
            decision, reason = "drop", f"{REASON_LOW_CORRELATION} at turn {t.i}"
            break
        if t.cf < config.cf_low:
            decision, reason = "drop", f"{REASON_REDUNDANCY} at turn {t.i}"
            break
    if decision == "keep" and final_score < config.s_threshold:
        decision, reason = "drop", REASON_LOW_QUALITY

    scored = dialogue.with_scores([t.s for t in per_turn])
    return DialogueDecision(
        dialogue=scored,
        per_turn=tuple(per_turn),
        final_score=final_score,
        decision=decision,
        reason=reason,
        scorer_identity=config.scorer.identity,
    )


def select_multi_turn(
    dialogues: Iterable[Dialogue],
    config: SelectionConfig,
) -> tuple[list[DialogueDecision], list[DialogueDecision], list[tuple[Dialogue, Exception]]]:
    """Partition dialogues into kept / dropped-with-reasons / errored.

    A dialogue is kept iff every assistant turn's cf lies inside
    [cf_low, cf_high] (inclusive bounds) and the mean per-turn s clears
    s_threshold. Per-record purity makes the decision independent of input
    order and dialogue ids.
    """
    kept: list[DialogueDecision] = []
    dropped: list[DialogueDecision] = []
    errors: list[tuple[Dialogue, Exception]] = []
    for dlg in dialogues:
        try:
            decision = score_dialogue(dlg, config)
        except Exception as exc:
            errors.append((dlg, exc))
            continue
        (kept if decision.decision == "keep" else dropped).append(decision)
    return kept, dropped, errors
