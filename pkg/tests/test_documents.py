from __future__ import annotations

import pytest

from corpuskit.documents import Dialogue, DialogueTurn, Document, dialogue_from_pairs, make_document


def doc(**kw) -> Document:
    base = dict(id="d1", text="some text", language="en", domain="medical",
                token_count=2, source="unit")
    base.update(kw)
    return Document(**base)


def test_document_roundtrip_fields() -> None:
    d = doc(quality_score=4.5, extra={"custom": 1})
    assert d.quality_score == 4.5
    assert d.extra["custom"] == 1


def test_document_rejects_empty_id() -> None:
    with pytest.raises(ValueError):
        doc(id="")


def test_document_rejects_bad_language_and_domain() -> None:
    with pytest.raises(ValueError):
        doc(language="fr")
    with pytest.raises(ValueError):
        doc(domain="finance")


def test_document_rejects_negative_token_count() -> None:
    with pytest.raises(ValueError):
        doc(token_count=-1)


@pytest.mark.parametrize("score", [-0.1, 5.1])
def test_document_quality_score_range(score: float) -> None:
    with pytest.raises(ValueError):
        doc(quality_score=score)


def test_make_document_computes_token_count_and_language() -> None:
    d = make_document("x", "你好医生", domain="medical", source="s")
    assert d.token_count == 4
    assert d.language == "zh"
    e = make_document("y", "plain english words", domain="general", source="s")
    assert e.token_count == 3
    assert e.language == "en"


def test_dialogue_turns_alternate_starting_with_user() -> None:
    d = dialogue_from_pairs("ok", [("hi", "hello"), ("more", "sure")])
    assert [t.role for t in d.turns] == ["user", "assistant", "user", "assistant"]
    assert [t.turn_index for t in d.turns] == [1, 2, 3, 4]


def test_dialogue_rejects_assistant_first() -> None:
    turns = (DialogueTurn("assistant", "hello", 1),)
    with pytest.raises(ValueError, match="role"):
        Dialogue(id="bad", turns=turns)


def test_dialogue_rejects_role_repeat() -> None:
    turns = (
        DialogueTurn("user", "a", 1),
        DialogueTurn("user", "b", 2),
    )
    with pytest.raises(ValueError, match="role"):
        Dialogue(id="bad", turns=turns)


def test_dialogue_rejects_bad_turn_indexing() -> None:
    turns = (
        DialogueTurn("user", "a", 1),
        DialogueTurn("assistant", "b", 3),
    )
    with pytest.raises(ValueError, match="turn_index"):
        Dialogue(id="bad", turns=turns)


def test_turn_rejects_empty_text() -> None:
    with pytest.raises(ValueError):
        DialogueTurn("user", "", 1)


def test_final_score_must_be_mean_of_per_turn_scores() -> None:
    d = dialogue_from_pairs("ok", [("hi", "hello")])
    scored = d.with_scores([2.0, 4.0])
    assert scored.final_score == pytest.approx(3.0)
    with pytest.raises(ValueError, match="final_score"):
        Dialogue(id="bad", turns=d.turns, per_turn_scores=(2.0, 4.0), final_score=1.0)
