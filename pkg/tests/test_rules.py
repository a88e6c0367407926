from __future__ import annotations

import re

import pytest
from hypothesis import given, strategies as st

from corpuskit.documents import make_document
from corpuskit.rules import (
    RULE_MIN_TOKENS,
    RULE_PII,
    RULE_SPECIAL_CHARS,
    RULE_TOXICITY,
    FilterVerdict,
    RuleConfig,
    apply_rules,
    filter_stream,
    special_char_ratio,
)

LONG_TEXT = " ".join(f"word{i}" for i in range(40))


def doc(text: str, **kw):
    return make_document(kw.pop("id", "d"), text, domain="general", language="en",
                         source="unit", **kw)


def test_short_document_fails_min_tokens() -> None:
    d = doc(" ".join(f"w{i}" for i in range(10)))
    assert d.token_count == 10
    verdict = apply_rules(d, RuleConfig(min_tokens=32))
    assert not verdict.passed
    assert RULE_MIN_TOKENS in verdict.failed_rules


def test_special_char_ratio_direct_count() -> None:
    # "ab!!": 2 special of 4 non-whitespace code points = 0.50 > 0.30
    assert special_char_ratio("ab!!") == pytest.approx(0.5)
    verdict = apply_rules(doc("ab!!"), RuleConfig(min_tokens=1, max_special_char_ratio=0.30))
    assert RULE_SPECIAL_CHARS in verdict.failed_rules


def test_special_char_ratio_zero_for_alnum() -> None:
    assert special_char_ratio("abc 123 病人") == 0.0
    assert special_char_ratio("") == 0.0


def test_cjk_not_counted_special() -> None:
    assert special_char_ratio("你好医生") == 0.0


def test_pii_email_detected_against_independent_oracle() -> None:
    text = LONG_TEXT + " contact me at a@b.com"
    # independent check: plain substring oracle for the planted address
    assert re.search(r"\S+@\S+", text) is not None
    verdict = apply_rules(doc(text), RuleConfig(min_tokens=1))
    assert RULE_PII in verdict.failed_rules


def test_pii_phone_detected() -> None:
    verdict = apply_rules(doc(LONG_TEXT + " call +1 415-555-0139 now"), RuleConfig(min_tokens=1))
    assert RULE_PII in verdict.failed_rules


def test_clean_long_text_passes_all_rules() -> None:
    verdict = apply_rules(doc(LONG_TEXT), RuleConfig(min_tokens=32, toxic_lexicon=("slur",)))
    assert verdict.passed
    assert verdict.failed_rules == ()


def test_toxicity_word_boundary() -> None:
    cfg = RuleConfig(min_tokens=1, toxic_lexicon=("damn",))
    assert RULE_TOXICITY in apply_rules(doc(LONG_TEXT + " damn it"), cfg).failed_rules
    # substring inside a longer word does not match
    assert apply_rules(doc(LONG_TEXT + " amsterdamned"), cfg).passed


def test_all_rules_evaluated_no_short_circuit() -> None:
    cfg = RuleConfig(min_tokens=32, max_special_char_ratio=0.1, toxic_lexicon=("bad",))
    verdict = apply_rules(doc("bad!!! a@b.com"), cfg)
    assert set(verdict.failed_rules) == {RULE_MIN_TOKENS, RULE_SPECIAL_CHARS, RULE_TOXICITY, RULE_PII}


def test_verdict_consistency_enforced() -> None:
    with pytest.raises(ValueError):
        FilterVerdict(passed=True, failed_rules=("min_tokens",))


def test_filter_stream_empty() -> None:
    passed, rejected = filter_stream([], RuleConfig())
    assert passed == [] and rejected == []


def test_filter_stream_partition_three_docs() -> None:
    docs = [doc(LONG_TEXT, id="a"), doc("short", id="b"), doc(LONG_TEXT + " tail", id="c")]
    passed, rejected = filter_stream(docs, RuleConfig(min_tokens=32))
    assert len(passed) + len(rejected) == 3
    assert [d.id for d in passed] == ["a", "c"]
    assert [d.id for d, _ in rejected] == ["b"]


def test_filter_stream_planted_violations_match_ground_truth() -> None:
    # Planting script: every 7th doc gets a planted email, every 11th is
    # too short; the ground-truth list is the oracle.
    docs = []
    planted = set()
    for i in range(1000):
        text = " ".join(f"tok{i}x{j}" for j in range(40))
        if i % 7 == 0:
            text += " reach me at x@y.org"
            planted.add(f"p{i}")
        if i % 11 == 0:
            text = "tiny text"
            planted.add(f"p{i}")
        docs.append(doc(text, id=f"p{i}"))
    passed, rejected = filter_stream(docs, RuleConfig(min_tokens=32))
    assert {d.id for d, _ in rejected} == planted
    assert len(passed) + len(rejected) == 1000


def test_filter_stream_parallel_matches_serial() -> None:
    docs = [doc(LONG_TEXT if i % 3 else "short", id=f"w{i}") for i in range(50)]
    serial = filter_stream(docs, RuleConfig())
    parallel = filter_stream(docs, RuleConfig(), workers=4)
    assert [d.id for d in serial[0]] == [d.id for d in parallel[0]]
    assert [d.id for d, _ in serial[1]] == [d.id for d, _ in parallel[1]]


@given(st.integers(min_value=1, max_value=60), st.integers(min_value=1, max_value=60))
def test_tightening_min_tokens_is_monotone(loose: int, tight: int) -> None:
    if tight < loose:
        loose, tight = tight, loose
    d = doc(" ".join(f"w{i}" for i in range(30)))
    loose_verdict = apply_rules(d, RuleConfig(min_tokens=loose))
    tight_verdict = apply_rules(d, RuleConfig(min_tokens=tight))
    if not loose_verdict.passed:
        assert not tight_verdict.passed


@given(st.floats(min_value=0.0, max_value=1.0), st.floats(min_value=0.0, max_value=1.0))
def test_tightening_special_ratio_is_monotone(a: float, b: float) -> None:
    lo, hi = min(a, b), max(a, b)
    d = doc("some text!! with?? specials%%")
    if not apply_rules(d, RuleConfig(min_tokens=1, max_special_char_ratio=hi)).passed:
        assert not apply_rules(d, RuleConfig(min_tokens=1, max_special_char_ratio=lo)).passed


def test_rule_config_loadable_from_files(tmp_path) -> None:
    lexicon = tmp_path / "toxic.txt"
    lexicon.write_text("# comment line\nslur\nbad phrase\n\n", encoding="utf-8")
    cfg_file = tmp_path / "rules.json"
    cfg_file.write_text(
        '{"min_tokens": 5, "max_special_char_ratio": 0.2, '
        f'"toxic_lexicon_file": "{lexicon}", "pii_patterns": ["email"]}}',
        encoding="utf-8",
    )
    cfg = RuleConfig.from_file(str(cfg_file))
    assert cfg.min_tokens == 5
    assert cfg.max_special_char_ratio == 0.2
    assert cfg.toxic_lexicon == ("slur", "bad phrase")
    assert cfg.pii_patterns == ("email",)
    verdict = apply_rules(doc("clean words one two three four five bad phrase here"), cfg)
    assert RULE_TOXICITY in verdict.failed_rules
