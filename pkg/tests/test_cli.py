from __future__ import annotations

import json
import random

import pytest

from corpuskit.cli import main
from corpuskit.documents import make_document, dialogue_from_pairs
from corpuskit.io import read_documents, write_documents, write_dialogues
from corpuskit.scoring import build_ngram_lm
from corpuskit.selection import SelectionConfig, select_multi_turn

TOY_CORPUS = [
    "the doctor says rest and fluids",
    "take ibuprofen for the fever",
    "rest and fluids help the fever",
    "the patient asks about dosage",
]


def write_config(tmp_path, name="cfg.json", **cfg) -> str:
    path = tmp_path / name
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return str(path)


def corpus_file(tmp_path, texts, name="corpus.jsonl") -> str:
    docs = [
        make_document(f"c{i}", t, domain="medical", language="en", source="corpus")
        for i, t in enumerate(texts)
    ]
    path = tmp_path / name
    write_documents(docs, str(path))
    return str(path)


def load_manifest(output: str) -> dict:
    with open(output + ".run.json", encoding="utf-8") as fh:
        return json.load(fh)


def test_stats_on_empty_file_exits_zero(tmp_path, capsys) -> None:
    empty = tmp_path / "empty.jsonl"
    empty.write_text("", encoding="utf-8")
    assert main(["stats", "--input", str(empty)]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out[str(empty)]["record_count"] == 0
    assert out[str(empty)]["token_totals"] == {}


def test_missing_config_file_is_config_error(tmp_path) -> None:
    rc = main(["stats", "--config", str(tmp_path / "nope.json"), "--input", "x"])
    assert rc == 2


def test_config_referencing_missing_file_is_config_error(tmp_path) -> None:
    cfg = write_config(tmp_path, rules={"toxic_lexicon_file": str(tmp_path / "absent.txt")})
    rc = main(["stats", "--config", cfg, "--input", str(tmp_path / "absent.jsonl")])
    assert rc == 2


def test_unreadable_input_is_data_error(tmp_path) -> None:
    rc = main(["stats", "--input", str(tmp_path / "missing.jsonl")])
    assert rc == 3


def test_filter_stage_writes_outputs_and_manifest(tmp_path, capsys) -> None:
    texts = [" ".join(f"w{i}x{j}" for j in range(40)) for i in range(8)]
    texts[3] = "too short"
    inp = corpus_file(tmp_path, texts)
    out = str(tmp_path / "passed.jsonl")
    cfg = write_config(tmp_path, rules={"min_tokens": 32})
    assert main(["filter", "--config", cfg, "--input", inp, "--output", out]) == 0
    counts = json.loads(capsys.readouterr().out)
    assert counts == {"input": 8, "passed": 7, "rejected": 1, "ingest_rejects": 0}
    assert len(list(read_documents(out))) == 7
    rejected_lines = (tmp_path / "passed.jsonl.rejected.jsonl").read_text().splitlines()
    assert json.loads(rejected_lines[0])["failed_rules"] == ["min_tokens"]
    manifest = load_manifest(out)
    assert manifest["command"] == "filter"
    assert manifest["counts"]["passed"] == 7
    assert manifest["inputs"][0]["path"] == inp


def test_dedup_stage(tmp_path, capsys) -> None:
    rng = random.Random(0)
    texts = [" ".join(rng.choice("abcdefgh") + str(rng.randrange(9)) for _ in range(30)) for _ in range(12)]
    texts += [texts[0], texts[1]]  # exact copies
    inp = corpus_file(tmp_path, texts)
    out = str(tmp_path / "unique.jsonl")
    assert main(["dedup", "--input", inp, "--output", out]) == 0
    counts = json.loads(capsys.readouterr().out)
    assert counts["input"] == 14 and counts["kept"] == 12


def test_confilter_stage_matches_module_level_scores(tmp_path, capsys) -> None:
    corpus = corpus_file(tmp_path, TOY_CORPUS)
    dialogues = [
        dialogue_from_pairs("toy", [("i have a fever", "rest and fluids"),
                                    ("what about medicine", "take ibuprofen for the fever")]),
        dialogue_from_pairs("single", [("i have a fever", "rest and fluids")]),
    ]
    dlg_path = tmp_path / "dialogues.jsonl"
    write_dialogues(dialogues, str(dlg_path))
    cfg = write_config(
        tmp_path,
        scorer={"kind": "ngram", "corpus": corpus, "order": 2, "add_k": 1.0},
        selection={"s_threshold": 0.0, "cf_low": 0.3, "cf_high": 1.0},
    )
    out = str(tmp_path / "kept.jsonl")
    assert main(["confilter", "--config", cfg, "--input", str(dlg_path), "--output", out]) == 0
    counts = json.loads(capsys.readouterr().out)
    assert counts == {"input": 2, "kept": 1, "dropped": 1, "errors": 0}

    report = {json.loads(l)["id"]: json.loads(l)
              for l in open(out + ".report.jsonl", encoding="utf-8")}
    lm = build_ngram_lm(TOY_CORPUS, order=2, add_k=1.0)
    module_kept, module_dropped, _ = select_multi_turn(
        dialogues, SelectionConfig(scorer=lm, s_threshold=0.0)
    )
    for decision in module_kept + module_dropped:
        rec = report[decision.dialogue.id]
        assert rec["decision"] == decision.decision
        assert rec["per_turn"] == [t.to_record() for t in decision.per_turn]
    assert report["toy"]["reason"] == "too-low-correlation at turn 2"


def test_select_stage(tmp_path, capsys) -> None:
    dialogues = [
        dialogue_from_pairs(f"d{i}", [(f"question {' x' * i}", f"answer {i}")])
        for i in range(10)
    ]
    dlg_path = tmp_path / "single.jsonl"
    write_dialogues(dialogues, str(dlg_path))
    cfg = write_config(tmp_path, selection={"s_threshold": 0.6})
    out = str(tmp_path / "kept.jsonl")
    assert main(["select", "--config", cfg, "--input", str(dlg_path), "--output", out]) == 0
    counts = json.loads(capsys.readouterr().out)
    assert counts["kept"] + counts["dropped"] == 10
    kept_lines = [json.loads(l) for l in open(out, encoding="utf-8")]
    assert all(l["s"] >= 0.6 for l in kept_lines)


def test_rate_stage(tmp_path, capsys) -> None:
    texts = [" ".join(f"t{i}w{j}" for j in range(10)) for i in range(40)]
    inp = corpus_file(tmp_path, texts)
    out = str(tmp_path / "rated.jsonl")
    cfg = write_config(tmp_path, rater={"kind": "stub", "seed": 7, "discrepancy_threshold": 2.0})
    assert main(["rate", "--config", cfg, "--input", inp, "--output", out]) == 0
    counts = json.loads(capsys.readouterr().out)
    assert counts["kept"] + counts["removed"] == 40
    kept = list(read_documents(out))
    assert all(d.quality_score is not None for d in kept)


def _mix_fixture(tmp_path, budget=60_000):
    rng = random.Random(1)
    paths = {}
    for bucket, domain in (("medical", "medical"), ("general", "general")):
        docs = []
        for lang in ("zh", "en"):
            target = budget  # deep pools
            made = 0
            while made < target:
                n = rng.randrange(40, 120)
                text = ("".join(rng.choice("病热咳医方治剂院验复") for _ in range(n))
                        if lang == "zh" else " ".join(f"{bucket[:3]}{lang}{i}" for i in range(n)))
                docs.append(make_document(f"{bucket}-{lang}-{made}", text, domain=domain,
                                          language=lang, source=bucket))
                made += n
        path = tmp_path / f"{bucket}.jsonl"
        write_documents(docs, str(path))
        paths[bucket] = str(path)
    return paths


def test_mix_then_verify_roundtrip(tmp_path, capsys) -> None:
    paths = _mix_fixture(tmp_path)
    cfg = write_config(
        tmp_path,
        seed=5,
        mix={"stage": "stable", "token_budget": 60_000, "buckets": paths, "tolerance_pct": 5.0},
    )
    out = str(tmp_path / "mixed.jsonl")
    assert main(["mix", "--config", cfg, "--output", out]) == 0
    capsys.readouterr()
    assert main(["verify", "--config", cfg, "--input", out]) == 0
    verdict = json.loads(capsys.readouterr().out)
    assert verdict["passed"] is True
    mix_report = json.loads(open(out + ".mix.json", encoding="utf-8").read())
    assert mix_report["realized"] == verdict["realized"]


def test_verify_fails_on_wrong_stage_spec(tmp_path, capsys) -> None:
    paths = _mix_fixture(tmp_path)
    cfg = write_config(
        tmp_path, seed=5,
        mix={"stage": "stable", "token_budget": 60_000, "buckets": paths},
    )
    out = str(tmp_path / "mixed.jsonl")
    assert main(["mix", "--config", cfg, "--output", out]) == 0
    capsys.readouterr()
    boost_cfg = write_config(
        tmp_path, "boost.json", seed=5,
        mix={"stage": "boost", "token_budget": 60_000,
             "buckets": {"corpus": paths["medical"], "sft": paths["general"]}},
    )
    assert main(["verify", "--config", boost_cfg, "--input", out]) == 3


def test_dpo_stage_counts(tmp_path, capsys) -> None:
    subj = tmp_path / "subjective.jsonl"
    with open(subj, "w", encoding="utf-8") as fh:
        for i in range(9):
            fh.write(json.dumps({"prompt": f"p{i}", "original": f"orig {i}",
                                 "generated": f"gen {i}"}) + "\n")
    obj = tmp_path / "objective.jsonl"
    with open(obj, "w", encoding="utf-8") as fh:
        for i in range(4):
            fh.write(json.dumps({"id": f"q{i}", "prompt": f"question {i}",
                                 "options": ["A", "B", "C", "D"], "answer": "A"}) + "\n")
    cfg = write_config(tmp_path, seed=2,
                       dpo={"subjective_file": str(subj), "objective_file": str(obj)})
    out = str(tmp_path / "pairs.jsonl")
    assert main(["dpo", "--config", cfg, "--output", out]) == 0
    report = json.loads(capsys.readouterr().out)
    assert report == {"subjective": 9, "objective": 4, "total": 13, "seed": 2}
    lines = [json.loads(l) for l in open(out, encoding="utf-8")]
    assert len(lines) == 13
    assert sum(1 for l in lines if l["kind"] == "objective") == 4
    assert all(l["chosen"] == "A" for l in lines if l["kind"] == "objective")


def test_stage_determinism_byte_identical_outputs(tmp_path, capsys) -> None:
    paths = _mix_fixture(tmp_path, budget=30_000)
    cfg = write_config(
        tmp_path, seed=9,
        mix={"stage": "boost", "token_budget": 30_000,
             "buckets": {"corpus": paths["medical"], "sft": paths["general"]}},
    )
    out_a = str(tmp_path / "a.jsonl")
    out_b = str(tmp_path / "b.jsonl")
    assert main(["mix", "--config", cfg, "--output", out_a]) == 0
    assert main(["mix", "--config", cfg, "--output", out_b]) == 0
    capsys.readouterr()
    assert open(out_a, "rb").read() == open(out_b, "rb").read()

    def stripped(path):
        m = json.load(open(path + ".run.json", encoding="utf-8"))
        m.pop("elapsed_s")
        for io_list in (m["inputs"], m["outputs"]):
            for entry in io_list:
                entry.pop("path", None)
        return m

    assert stripped(out_a) == stripped(out_b)


def test_env_var_overrides_scorer_command(tmp_path, capsys, monkeypatch) -> None:
    import sys as _sys

    dialogues = [dialogue_from_pairs("d0", [("ask something", "short answer")])]
    dlg_path = tmp_path / "dlg.jsonl"
    write_dialogues(dialogues, str(dlg_path))
    cfg = write_config(tmp_path, scorer={"kind": "uniform", "vocab_size": 10},
                       selection={"s_threshold": 0.0})
    monkeypatch.setenv("CORPUSKIT_SCORER_CMD",
                       f"{_sys.executable} -m corpuskit.scorer_server --uniform 77")
    out = str(tmp_path / "kept.jsonl")
    assert main(["confilter", "--config", cfg, "--input", str(dlg_path), "--output", out]) == 0
    capsys.readouterr()
    report = json.loads(open(out + ".report.jsonl", encoding="utf-8").readline())
    assert report["scorer"] == "uniform-v77"  # env var won over the config


def test_broken_external_scorer_is_exit_code_4(tmp_path) -> None:
    import sys as _sys

    dlg_path = tmp_path / "dlg.jsonl"
    write_dialogues([dialogue_from_pairs("d0", [("q", "a")])], str(dlg_path))
    bad_server = tmp_path / "bad.py"
    bad_server.write_text("print('not a handshake', flush=True)\n", encoding="utf-8")
    cfg = write_config(tmp_path, scorer={"kind": "external",
                                         "command": [_sys.executable, str(bad_server)]})
    rc = main(["confilter", "--config", cfg, "--input", str(dlg_path),
               "--output", str(tmp_path / "out.jsonl")])
    assert rc == 4
