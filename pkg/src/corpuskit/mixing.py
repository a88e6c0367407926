"""Two-stage continual-pretraining mixtures at exact token-level ratios.

The stable stage blends the domain corpus with general data 19:1 at a 1:9
zh:en token distribution; the boost stage blends corpus with SFT-style data
1:1 at 4:6. Ratios are treated as two independent marginals, so every
(bucket, language) cell's quota is budget x bucket-share x language-share,
apportioned to integers by largest remainder. Product-form quotas make the
language ratio hold per bucket and globally at once.

Documents are sampled whole, so a cell may overshoot its quota by at most
one document; the deviation is reported, never hidden. Underfilled cells
repeat documents in deterministic re-shuffled passes only up to max_repeats
(default 1 = no repetition), then report a shortfall: silent oversampling
would distort the very ratios the stage exists to control.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Mapping, Sequence

from .documents import Document
from .io import read_documents
from .util import derive_rng

STAGE_BUCKETS = {"stable": ("medical", "general"), "boost": ("corpus", "sft")}
STAGE_DEFAULTS = {
    "stable": {"domain_ratio": (19, 1), "language_ratio": (1, 9)},
    "boost": {"domain_ratio": (1, 1), "language_ratio": (4, 6)},
}
LANG_ORDER = ("zh", "en")


class MixError(Exception):
    pass


@dataclass(frozen=True)
class MixSpec:
    stage: str
    token_budget: int
    seed: int
    domain_ratio: tuple[int, int] = (0, 0)  # (primary bucket : other bucket)
    language_ratio: tuple[int, int] = (0, 0)  # (zh : en)
    buckets: tuple[str, str] = ()
    max_repeats: int = 1

    def __post_init__(self) -> None:
        if self.stage not in STAGE_BUCKETS:
            raise ValueError(f"unknown stage {self.stage!r}")
        if self.token_budget <= 0:
            raise ValueError("token_budget must be positive")
        if self.max_repeats < 1:
            raise ValueError("max_repeats must be >= 1")
        defaults = STAGE_DEFAULTS[self.stage]
        if self.domain_ratio == (0, 0):
            object.__setattr__(self, "domain_ratio", defaults["domain_ratio"])
        if self.language_ratio == (0, 0):
            object.__setattr__(self, "language_ratio", defaults["language_ratio"])
        if not self.buckets:
            object.__setattr__(self, "buckets", STAGE_BUCKETS[self.stage])
        if min(self.domain_ratio) <= 0 or min(self.language_ratio) <= 0:
            raise ValueError("ratio components must be positive")

    def to_record(self) -> dict:
        return {
            "stage": self.stage,
            "token_budget": self.token_budget,
            "seed": self.seed,
            "domain_ratio": list(self.domain_ratio),
            "language_ratio": list(self.language_ratio),
            "buckets": list(self.buckets),
            "max_repeats": self.max_repeats,
        }


@dataclass(frozen=True)
class MixPlan:
    spec: MixSpec
    quotas: dict[tuple[str, str], int]  # (bucket, language) -> token quota
    underfilled_cells: tuple[tuple[str, str], ...] = ()

    @property
    def bucket_totals(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for (bucket, _), q in self.quotas.items():
            out[bucket] = out.get(bucket, 0) + q
        return out

    @property
    def language_totals(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for (_, lang), q in self.quotas.items():
            out[lang] = out.get(lang, 0) + q
        return out

    def to_record(self) -> dict:
        return {f"{b}/{l}": q for (b, l), q in sorted(self.quotas.items())}


def largest_remainder(weights: Sequence[float], total: int) -> list[int]:
    """Apportion total units proportionally to weights; sums exactly."""
    wsum = sum(weights)
    if wsum <= 0:
        raise ValueError("weights must sum to a positive value")
    raw = [total * w / wsum for w in weights]
    floors = [int(x) for x in raw]
    leftover = total - sum(floors)
    order = sorted(range(len(raw)), key=lambda i: (-(raw[i] - floors[i]), i))
    for i in order[:leftover]:
        floors[i] += 1
    return floors


def plan_mix(spec: MixSpec) -> MixPlan:
    """Turn stage ratios into integer per-cell token quotas."""
    d_sum = sum(spec.domain_ratio)
    l_sum = sum(spec.language_ratio)
    cells: list[tuple[str, str]] = []
    weights: list[float] = []
    for b_idx, bucket in enumerate(spec.buckets):
        for l_idx, lang in enumerate(LANG_ORDER):
            cells.append((bucket, lang))
            weights.append((spec.domain_ratio[b_idx] / d_sum) * (spec.language_ratio[l_idx] / l_sum))
    quotas = dict(zip(cells, largest_remainder(weights, spec.token_budget)))
    underfilled = tuple(
        cell for cell, w in zip(cells, weights) if w > 0 and quotas[cell] == 0
    )
    return MixPlan(spec=spec, quotas=quotas, underfilled_cells=underfilled)


@dataclass(frozen=True)
class MixReport:
    spec: MixSpec
    quotas: dict[tuple[str, str], int]
    realized: dict[tuple[str, str], int]
    deviation_pct: dict[str, float]
    shortfalls: dict[tuple[str, str], int]
    seed: int

    def to_record(self) -> dict:
        return {
            "stage": self.spec.stage,
            "spec": self.spec.to_record(),
            "quotas": {f"{b}/{l}": q for (b, l), q in sorted(self.quotas.items())},
            "realized": {f"{b}/{l}": q for (b, l), q in sorted(self.realized.items())},
            "deviation_pct": dict(sorted(self.deviation_pct.items())),
            "shortfalls": {f"{b}/{l}": q for (b, l), q in sorted(self.shortfalls.items())},
            "seed": self.seed,
        }


def _marginal_deviations(
    spec: MixSpec, realized: Mapping[tuple[str, str], int]
) -> dict[str, float]:
    """Relative deviation (percent) of each marginal share from its target."""
    total = sum(realized.values())
    out: dict[str, float] = {}
    if total == 0:
        for bucket in spec.buckets:
            out[f"bucket:{bucket}"] = 100.0
        for lang in LANG_ORDER:
            out[f"language:{lang}"] = 100.0
        return out
    d_sum = sum(spec.domain_ratio)
    l_sum = sum(spec.language_ratio)
    for b_idx, bucket in enumerate(spec.buckets):
        share = sum(n for (b, _), n in realized.items() if b == bucket) / total
        target = spec.domain_ratio[b_idx] / d_sum
        out[f"bucket:{bucket}"] = abs(share - target) / target * 100.0
    for l_idx, lang in enumerate(LANG_ORDER):
        share = sum(n for (_, l), n in realized.items() if l == lang) / total
        target = spec.language_ratio[l_idx] / l_sum
        out[f"language:{lang}"] = abs(share - target) / target * 100.0
    return out


def sample_mix(
    pools: Mapping[str, Iterable[Document]],
    plan: MixPlan,
    seed: int | None = None,
) -> tuple[list[Document], MixReport]:
    """Draw documents per cell until each quota is met, then globally shuffle.

    Sampling is without replacement within a pass; repeat passes (up to
    spec.max_repeats) re-shuffle deterministically and re-id repeated
    documents so dataset ids stay unique. Every output document carries
    provenance: mix_bucket, mix_pass, and its origin id.
    """
    spec = plan.spec
    seed = spec.seed if seed is None else seed
    by_bucket = {bucket: list(docs) for bucket, docs in pools.items()}
    for bucket in spec.buckets:
        if bucket not in by_bucket:
            raise MixError(f"no pool supplied for bucket {bucket!r}")

    selected: list[Document] = []
    realized: dict[tuple[str, str], int] = {}
    shortfalls: dict[tuple[str, str], int] = {}
    for (bucket, lang), quota in sorted(plan.quotas.items()):
        realized[(bucket, lang)] = 0
        if quota <= 0:
            continue
        cell_pool = [d for d in by_bucket[bucket] if d.language == lang]
        if not cell_pool:
            raise MixError(f"cell ({bucket}, {lang}) has quota {quota} but an empty pool")
        got = 0
        for pass_no in range(1, spec.max_repeats + 1):
            order = list(cell_pool)
            derive_rng(seed, "cell", bucket, lang, pass_no).shuffle(order)
            for doc in order:
                if got >= quota:
                    break
                out = doc
                if pass_no > 1:
                    out = replace(doc, id=f"{doc.id}~p{pass_no}")
                out = replace(
                    out,
                    extra={**out.extra, "mix_bucket": bucket, "mix_pass": pass_no,
                           "origin_id": doc.id},
                )
                selected.append(out)
                got += out.token_count
            if got >= quota:
                break
        realized[(bucket, lang)] = got
        if got < quota:
            shortfalls[(bucket, lang)] = quota - got

    derive_rng(seed, "global-shuffle").shuffle(selected)
    report = MixReport(
        spec=spec,
        quotas=dict(plan.quotas),
        realized=realized,
        deviation_pct=_marginal_deviations(spec, realized),
        shortfalls=shortfalls,
        seed=seed,
    )
    return selected, report


@dataclass(frozen=True)
class VerifyReport:
    passed: bool
    reasons: tuple[str, ...]
    realized: dict[tuple[str, str], int]
    deviation_pct: dict[str, float]

    def to_record(self) -> dict:
        return {
            "passed": self.passed,
            "reasons": list(self.reasons),
            "realized": {f"{b}/{l}": n for (b, l), n in sorted(self.realized.items())},
            "deviation_pct": dict(sorted(self.deviation_pct.items())),
        }


def verify_mix(
    dataset_path: str,
    spec: MixSpec,
    tolerance_pct: float = 1.0,
    sample_report: MixReport | None = None,
) -> VerifyReport:
    """Recount a written mix independently of sample_mix bookkeeping.

    Fails when provenance is missing, any marginal deviates beyond
    tolerance, or (when the sampler's report is supplied) the recount
    disagrees with it.
    """
    realized: dict[tuple[str, str], int] = {}
    reasons: list[str] = []
    count = 0
    for doc in read_documents(dataset_path):
        count += 1
        bucket = doc.extra.get("mix_bucket")
        if bucket is None:
            reasons.append(f"document {doc.id} lacks mix provenance")
            continue
        key = (bucket, doc.language)
        realized[key] = realized.get(key, 0) + doc.token_count
    if count == 0:
        return VerifyReport(False, ("dataset is empty: zero tokens",), {}, {})
    deviations = _marginal_deviations(spec, realized)
    for name, dev in sorted(deviations.items()):
        if dev > tolerance_pct:
            reasons.append(f"{name} deviates {dev:.2f}% (> {tolerance_pct}%)")
    if sample_report is not None:
        reported = {k: v for k, v in sample_report.realized.items() if v}
        recounted = {k: v for k, v in realized.items() if v}
        if reported != recounted:
            reasons.append("recount disagrees with the sampler's report")
    return VerifyReport(
        passed=not reasons,
        reasons=tuple(reasons),
        realized=realized,
        deviation_pct=deviations,
    )
