"""Rule-based quality filtering over pretraining documents.

Every enabled rule is evaluated (no short-circuit) so a verdict's
failed_rules list is complete. "Special characters" are code points that are
neither letters, digits, whitespace, nor CJK ideographs, which keeps Chinese
text from being penalized. PII rules reject, they never redact.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass

from .documents import Document
from .tokenizer import is_cjk, tokenize

RULE_MIN_TOKENS = "min_tokens"
RULE_SPECIAL_CHARS = "special_char_ratio"
RULE_TOXICITY = "toxicity"
RULE_PII = "pii"

# Named PII pattern specs; anything else in pii_patterns is a raw regex.
PII_PATTERNS = {
    "email": r"[A-Za-z0-9._%+-]+@[A-Za-z0-9-]+(?:\.[A-Za-z0-9-]+)+",
    "phone": r"(?<![\d.])\+?\d(?:[\s().-]?\d){7,14}(?![\d.])",
}


@dataclass(frozen=True)
class RuleConfig:
    min_tokens: int = 32
    max_special_char_ratio: float = 0.30
    toxic_lexicon: tuple[str, ...] = ()
    pii_patterns: tuple[str, ...] = ("email", "phone")

    def __post_init__(self) -> None:
        if self.min_tokens < 1:
            raise ValueError("min_tokens must be >= 1")
        if not (0.0 <= self.max_special_char_ratio <= 1.0):
            raise ValueError("max_special_char_ratio must lie in [0, 1]")

    @classmethod
    def from_file(cls, path: str) -> "RuleConfig":
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        lexicon: tuple[str, ...] = ()
        if raw.get("toxic_lexicon_file"):
            lexicon = load_term_file(raw["toxic_lexicon_file"])
        elif raw.get("toxic_lexicon"):
            lexicon = tuple(raw["toxic_lexicon"])
        patterns = raw.get("pii_patterns")
        if isinstance(patterns, str):
            patterns = load_term_file(patterns)
        return cls(
            min_tokens=raw.get("min_tokens", 32),
            max_special_char_ratio=raw.get("max_special_char_ratio", 0.30),
            toxic_lexicon=lexicon,
            pii_patterns=tuple(patterns) if patterns is not None else ("email", "phone"),
        )


def load_term_file(path: str) -> tuple[str, ...]:
    """One entry per line; blank lines and #-comments skipped."""
    terms = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                terms.append(line)
    return tuple(terms)


@dataclass(frozen=True)
class FilterVerdict:
    passed: bool
    failed_rules: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.passed != (len(self.failed_rules) == 0):
            raise ValueError("passed must be equivalent to failed_rules being empty")


def special_char_ratio(text: str) -> float:
    """Share of special code points among non-whitespace code points."""
    special = total = 0
    for ch in text:
        if ch.isspace():
            continue
        total += 1
        if not (ch.isalnum() or is_cjk(ch)):
            special += 1
    return special / total if total else 0.0


def _contains_term(tokens: list[str], term_tokens: list[str]) -> bool:
    if not term_tokens or len(term_tokens) > len(tokens):
        return False
    first = term_tokens[0]
    for i, tok in enumerate(tokens):
        if tok == first and tokens[i : i + len(term_tokens)] == term_tokens:
            return True
    return False


def contains_toxic_term(text: str, lexicon: tuple[str, ...]) -> bool:
    """Word-boundary matching realized on the token stream, so it behaves
    sensibly for CJK terms too (each ideograph is one token)."""
    tokens = [t.lower() for t in tokenize(text)]
    for term in lexicon:
        if _contains_term(tokens, [t.lower() for t in tokenize(term)]):
            return True
    return False


def contains_pii(text: str, patterns: tuple[str, ...]) -> bool:
    for spec in patterns:
        pattern = PII_PATTERNS.get(spec, spec)
        if re.search(pattern, text):
            return True
    return False


def apply_rules(doc: Document, config: RuleConfig) -> FilterVerdict:
    """Evaluate all enabled rules; deterministic, complete failed_rules."""
    failed: list[str] = []
    if doc.token_count < config.min_tokens:
        failed.append(RULE_MIN_TOKENS)
    if special_char_ratio(doc.text) > config.max_special_char_ratio:
        failed.append(RULE_SPECIAL_CHARS)
    if config.toxic_lexicon and contains_toxic_term(doc.text, config.toxic_lexicon):
        failed.append(RULE_TOXICITY)
    if config.pii_patterns and contains_pii(doc.text, config.pii_patterns):
        failed.append(RULE_PII)
    return FilterVerdict(passed=not failed, failed_rules=tuple(failed))


def filter_stream(
    docs,
    config: RuleConfig,
    workers: int = 1,
) -> tuple[list[Document], list[tuple[Document, FilterVerdict]]]:
    """Partition documents into (passed, rejected-with-verdicts).

    The partition is exhaustive and disjoint and both sides preserve input
    order.
    """
    from .util import ordered_pmap

    docs = list(docs)
    verdicts = ordered_pmap(lambda d: apply_rules(d, config), docs, workers)
    passed: list[Document] = []
    rejected: list[tuple[Document, FilterVerdict]] = []
    for doc, verdict in zip(docs, verdicts):
        if verdict.passed:
            passed.append(doc)
        else:
            rejected.append((doc, verdict))
    return passed, rejected
