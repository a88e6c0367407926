from __future__ import annotations

import itertools
import random

import pytest

from corpuskit.dedup import (
    DupCluster,
    MinHashConfig,
    dedup_stream,
    exact_dedup,
    jaccard,
    near_dup_clusters,
    near_dedup,
    normalize_text,
    shingle_set,
)
from corpuskit.documents import Document, make_document
from corpuskit.tokenizer import tokenize

WORDS = ["renal", "hepatic", "cardiac", "fever", "dose", "onset", "lesion",
         "portal", "biopsy", "serum", "triage", "apnea", "sepsis", "edema"]


def doc(id: str, text: str) -> Document:
    return make_document(id, text, domain="general", language="en", source="unit")


def synth_text(rng: random.Random, n: int = 40) -> str:
    return " ".join(rng.choice(WORDS) for _ in range(n))


def test_exact_dedup_keeps_first_of_identical() -> None:
    a1, a2, b = doc("a1", "same text here"), doc("a2", "same text here"), doc("b", "different text")
    assert [d.id for d in exact_dedup([a1, a2, b])] == ["a1", "b"]


def test_exact_dedup_normalizes_whitespace() -> None:
    a = doc("a", "same text here")
    b = doc("b", "  same   text\there ")
    assert normalize_text(b.text) == a.text
    assert [d.id for d in exact_dedup([a, b])] == ["a"]


def test_exact_dedup_planted_copies_match_set_oracle() -> None:
    rng = random.Random(5)
    originals = [synth_text(rng) for _ in range(900)]
    copies = [originals[rng.randrange(900)] for _ in range(100)]
    docs = [doc(f"d{i}", t) for i, t in enumerate(originals + copies)]
    rng.shuffle(docs)
    survivors = exact_dedup(docs)
    oracle = len({normalize_text(d.text) for d in docs})
    assert len(survivors) == oracle


def test_minhash_config_band_arithmetic_enforced() -> None:
    with pytest.raises(ValueError):
        MinHashConfig(num_hashes=128, bands=10, rows_per_band=8)


def test_identical_docs_form_one_cluster() -> None:
    text = synth_text(random.Random(0))
    clusters = near_dup_clusters([doc("x", text), doc("y", text)])
    assert len(clusters) == 1
    assert clusters[0].ids == ("x", "y")
    assert clusters[0].jaccard_min == 1.0
    assert clusters[0].to_record() == {"kept_id": "x", "dropped_ids": ["y"], "jaccard_min": 1.0}


def test_disjoint_docs_form_no_cluster() -> None:
    a = doc("a", " ".join(f"left{i}" for i in range(30)))
    b = doc("b", " ".join(f"right{i}" for i in range(30)))
    assert jaccard(shingle_set(tokenize(a.text), 5), shingle_set(tokenize(b.text), 5)) == 0.0
    assert near_dup_clusters([a, b]) == []


def test_short_docs_bypass_near_dup() -> None:
    clusters = near_dup_clusters([doc("a", "one two"), doc("b", "one two")])
    assert clusters == []  # below shingle size; exact dedup still covers them


def _near_copy(text: str, tag: str) -> str:
    # appending one token to a 60-token doc keeps shingle Jaccard ~0.98
    return text + " " + tag


def brute_force_pairs(docs: list[Document], config: MinHashConfig) -> set[tuple[str, str]]:
    """O(n^2) exact-Jaccard oracle over the same shingle definition."""
    sets = {}
    for d in docs:
        tokens = tokenize(d.text)
        if len(tokens) >= config.shingle_size:
            sets[d.id] = shingle_set(tokens, config.shingle_size)
    out = set()
    for (ida, sa), (idb, sb) in itertools.combinations(sets.items(), 2):
        if jaccard(sa, sb) >= config.jaccard_threshold:
            out.add((min(ida, idb), max(ida, idb)))
    return out


def clustered_pairs(clusters: list[DupCluster]) -> set[tuple[str, str]]:
    out = set()
    for c in clusters:
        for x, y in itertools.combinations(c.ids, 2):
            out.add((min(x, y), max(x, y)))
    return out


def test_planted_near_dups_recall_vs_brute_force() -> None:
    rng = random.Random(11)
    docs = []
    for i in range(300):
        base = synth_text(rng, 60)
        docs.append(doc(f"b{i}", base))
        if i % 5 == 0:
            docs.append(doc(f"n{i}", _near_copy(base, "tail")))
    config = MinHashConfig()
    oracle = brute_force_pairs(docs, config)
    got = clustered_pairs(near_dup_clusters(docs, config))
    assert oracle, "fixture must plant some true pairs"
    recall = len(got & oracle) / len(oracle)
    assert recall >= 0.95
    # soundness: every emitted pair really has Jaccard >= threshold
    assert got <= oracle


def test_near_dedup_idempotent() -> None:
    rng = random.Random(2)
    docs = []
    for i in range(80):
        t = synth_text(rng, 50)
        docs.append(doc(f"o{i}", t))
        if i % 4 == 0:
            docs.append(doc(f"c{i}", t + " extra"))
    once, _ = dedup_stream(docs)
    twice, clusters2 = dedup_stream(once)
    assert [d.id for d in twice] == [d.id for d in once]
    assert clusters2 == []


def test_determinism_same_seed_identical_survivors() -> None:
    rng = random.Random(9)
    docs = [doc(f"d{i}", synth_text(rng, 50)) for i in range(120)]
    docs += [doc(f"dup{i}", docs[i].text) for i in range(10)]
    a, ca = near_dedup(docs, MinHashConfig(seed=42))
    b, cb = near_dedup(docs, MinHashConfig(seed=42))
    assert [d.id for d in a] == [d.id for d in b]
    assert ca == cb


def test_cluster_keeps_first_seen() -> None:
    t = synth_text(random.Random(4), 50)
    docs = [doc("first", t), doc("second", t), doc("third", t)]
    survivors, clusters = near_dedup(docs)
    assert [d.id for d in survivors] == ["first"]
    assert clusters[0].kept_id == "first"
    assert clusters[0].dropped_ids == ("second", "third")


def test_group_by_source_scopes_exact_dedup() -> None:
    a = make_document("a", "same text body", domain="general", language="en", source="src1")
    b = make_document("b", "same text body", domain="general", language="en", source="src2")
    assert [d.id for d in exact_dedup([a, b])] == ["a"]
    assert [d.id for d in exact_dedup([a, b], group_by_source=True)] == ["a", "b"]
