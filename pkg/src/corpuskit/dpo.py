"""Preference-pair construction for DPO.

Objective pairs come from questions with known ground truth: the truth is
chosen and one wrong option, drawn uniformly with a seeded RNG, is rejected.
Subjective pairs come from judging an original response against a generated
one on four dimensions (fluency, relevance, completeness, proficiency); the
response with the greater unweighted mean wins, ties go to the original so
the authentic distribution is preserved when the judge is indifferent.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Iterable, Mapping

from .util import derive_rng, stable_uniform

JUDGE_DIMENSIONS = ("fluency", "relevance", "completeness", "proficiency")
KINDS = ("subjective", "objective")


@dataclass(frozen=True)
class PreferencePair:
    prompt: str
    chosen: str
    rejected: str
    kind: str
    judge_record: dict[str, Any] | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown pair kind {self.kind!r}")
        if self.chosen == self.rejected:
            raise ValueError("chosen and rejected must differ")
        if self.kind == "objective" and self.judge_record is not None:
            raise ValueError("objective pairs carry no judge record")
        if self.kind == "subjective" and self.judge_record is None:
            raise ValueError("subjective pairs always carry a judge record")

    def to_record(self) -> dict[str, Any]:
        rec: dict[str, Any] = {
            "prompt": self.prompt,
            "chosen": self.chosen,
            "rejected": self.rejected,
            "kind": self.kind,
        }
        if self.judge_record is not None:
            rec["judge_record"] = self.judge_record
        return rec


def record_to_pair(rec: Mapping[str, Any]) -> PreferencePair:
    return PreferencePair(
        prompt=rec["prompt"],
        chosen=rec["chosen"],
        rejected=rec["rejected"],
        kind=rec["kind"],
        judge_record=rec.get("judge_record"),
    )


@dataclass(frozen=True)
class ObjectiveQuestion:
    id: str
    prompt: str
    options: tuple[str, ...]
    answer: str

    def __post_init__(self) -> None:
        if len(self.options) < 2:
            raise ValueError(f"question {self.id}: need at least two options")
        if len(set(self.options)) != len(self.options):
            raise ValueError(f"question {self.id}: options must be distinct")
        if self.answer not in self.options:
            raise ValueError(f"question {self.id}: ground truth not among the options")


@dataclass(frozen=True)
class JudgeVerdict:
    scores: dict[str, dict[str, float]]  # response tag -> dimension -> score
    winner: str  # "original" | "generated"

    def __post_init__(self) -> None:
        for tag, dims in self.scores.items():
            missing = [d for d in JUDGE_DIMENSIONS if d not in dims]
            if missing:
                raise ValueError(f"{tag} verdict is missing dimensions: {missing}")
        if self.winner not in ("original", "generated"):
            raise ValueError(f"unknown winner {self.winner!r}")


# judge(prompt, response) -> {dimension: score} over the four dimensions
Judge = Callable[[str, str], Mapping[str, float]]


def build_objective_pair(question: ObjectiveQuestion, seed: int) -> PreferencePair:
    """chosen = ground truth; rejected = seeded uniform draw from the rest.

    Deterministic per (question id, seed) regardless of processing order.
    """
    wrong = [opt for opt in question.options if opt != question.answer]
    rng = derive_rng(seed, "objective", question.id)
    return PreferencePair(
        prompt=question.prompt,
        chosen=question.answer,
        rejected=wrong[rng.randrange(len(wrong))],
        kind="objective",
    )


def build_subjective_pair(
    prompt: str,
    original_response: str,
    generated_response: str,
    judge: Judge,
) -> PreferencePair:
    """Judge both responses on the four dimensions; greater mean wins."""
    if not original_response or not generated_response:
        raise ValueError("both responses must be non-empty")
    scores = {
        "original": {d: float(s) for d, s in dict(judge(prompt, original_response)).items()},
        "generated": {d: float(s) for d, s in dict(judge(prompt, generated_response)).items()},
    }
    means = {
        tag: sum(dims[d] for d in JUDGE_DIMENSIONS) / len(JUDGE_DIMENSIONS)
        for tag, dims in scores.items()
    }
    # tie goes to the original (real-world) response
    winner = "generated" if means["generated"] > means["original"] else "original"
    verdict = JudgeVerdict(scores=scores, winner=winner)
    chosen, rejected = (
        (generated_response, original_response)
        if winner == "generated"
        else (original_response, generated_response)
    )
    return PreferencePair(
        prompt=prompt,
        chosen=chosen,
        rejected=rejected,
        kind="subjective",
        judge_record={
            "scores": verdict.scores,
            "verdict": verdict.winner,
            "means": means,
            "aggregation": "unweighted-mean",
            "tie_rule": "original-wins",
        },
    )


@dataclass(frozen=True)
class DpoReport:
    subjective: int
    objective: int
    seed: int

    @property
    def total(self) -> int:
        return self.subjective + self.objective

    def to_record(self) -> dict[str, int]:
        return {"subjective": self.subjective, "objective": self.objective,
                "total": self.total, "seed": self.seed}


def build_dataset(
    subjective: Iterable[PreferencePair],
    objective: Iterable[PreferencePair],
    seed: int = 0,
) -> tuple[list[PreferencePair], DpoReport]:
    """Concatenate, seeded-shuffle, and report counts by kind."""
    subjective = list(subjective)
    objective = list(objective)
    for pair, want in ((subjective, "subjective"), (objective, "objective")):
        for p in pair:
            if p.kind != want:
                raise ValueError(f"{want} stream contains a {p.kind} pair")
    pairs = subjective + objective
    derive_rng(seed, "dpo-shuffle").shuffle(pairs)
    return pairs, DpoReport(subjective=len(subjective), objective=len(objective), seed=seed)


@dataclass(frozen=True)
class StubJudge:
    """Seeded judge emitting uniform [0, 5] dimension scores; test double."""

    seed: int

    def __call__(self, prompt: str, response: str) -> dict[str, float]:
        return {
            d: 5.0 * stable_uniform(self.seed, "judge", prompt, response, d)
            for d in JUDGE_DIMENSIONS
        }
