"""Command-line orchestration of the pipeline stages.

Stages compose only through files; every invocation writes a run manifest
(config hash, seed, input/output checksums, counts, timings) next to its
output so any intermediate can be audited and any stage re-run in isolation.
Exit codes: 0 success, 2 configuration error, 3 data error, 4 external
scorer error.

    corpuskit filter   --config cfg.json --input docs.jsonl --output clean.jsonl
    corpuskit dedup    --config cfg.json --input clean.jsonl --output unique.jsonl
    corpuskit confilter --config cfg.json --input dialogues.jsonl --output kept.jsonl
    corpuskit select   --config cfg.json --input dialogues.jsonl --output kept.jsonl
    corpuskit rate     --config cfg.json --input docs.jsonl --output rated.jsonl
    corpuskit mix      --config cfg.json --output mixed.jsonl
    corpuskit verify   --config cfg.json --input mixed.jsonl
    corpuskit dpo      --config cfg.json --output pairs.jsonl
    corpuskit stats    --input any.jsonl

The external scorer command may also come from the CORPUSKIT_SCORER_CMD
environment variable (shell-split), overriding the config.
"""
from __future__ import annotations

import argparse
import json
import os
import shlex
import sys
import time
from typing import Any, Sequence

from . import io as ckio
from .dedup import MinHashConfig, dedup_stream
from .documents import Document
from .dpo import ObjectiveQuestion, StubJudge, build_dataset, build_objective_pair, build_subjective_pair
from .mixing import MixError, MixSpec, plan_mix, sample_mix, verify_mix
from .protocol import ExternalScorerClient, ScorerProtocolError
from .rating import StubLabeler, StubRater, double_score_filter, two_round_agreement
from .rules import RuleConfig, filter_stream
from .scoring import UniformBackend, build_ngram_lm
from .selection import SelectionConfig, reference_instance_scorer, select_multi_turn, select_single_turn
from .tokenizer import TokenizerConfig
from .util import canonical_json, sha256_file, sha256_text

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_SCORER = 4

SCORER_CMD_ENV = "CORPUSKIT_SCORER_CMD"


class ConfigError(Exception):
    pass


def _load_config(path: str | None) -> dict[str, Any]:
    if path is None:
        return {}
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    _check_referenced_files(cfg)
    return cfg


def _check_referenced_files(cfg: dict[str, Any]) -> None:
    for key, value in _walk(cfg):
        if key.endswith(("_file", "_path")) or key == "corpus":
            if isinstance(value, str) and not os.path.exists(value):
                raise ConfigError(f"config references missing file: {key} = {value}")


def _walk(obj: Any, prefix: str = ""):
    if isinstance(obj, dict):
        for k, v in obj.items():
            yield from _walk(v, k)
    elif isinstance(obj, list):
        for v in obj:
            yield from _walk(v, prefix)
    else:
        yield prefix, obj


def _tokenizer(cfg: dict[str, Any]) -> TokenizerConfig:
    t = cfg.get("tokenizer", {})
    return TokenizerConfig(scheme=t.get("scheme", "unicode-word"), lowercase=t.get("lowercase", False))


def _seed(cfg: dict[str, Any], args: argparse.Namespace) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    return int(cfg.get("seed", 0))


def _build_scorer(cfg: dict[str, Any], tokenizer: TokenizerConfig):
    spec = dict(cfg.get("scorer", {}))
    env_cmd = os.environ.get(SCORER_CMD_ENV)
    if env_cmd:
        spec = {"kind": "external", "command": shlex.split(env_cmd)}
    kind = spec.get("kind")
    if kind == "uniform":
        return UniformBackend(vocab_size=int(spec.get("vocab_size", 1000)), tokenizer=tokenizer)
    if kind == "ngram":
        corpus_path = spec.get("corpus")
        if not corpus_path:
            raise ConfigError("ngram scorer requires a 'corpus' path")
        docs = [d.text for d in ckio.read_documents(corpus_path, tokenizer=tokenizer)]
        return build_ngram_lm(docs, order=int(spec.get("order", 3)),
                              add_k=float(spec.get("add_k", 1.0)), tokenizer=tokenizer)
    if kind == "external":
        command = spec.get("command")
        if not command:
            raise ConfigError("external scorer requires a 'command' (or CORPUSKIT_SCORER_CMD)")
        return ExternalScorerClient.from_command(command, timeout=float(spec.get("timeout", 60.0)))
    raise ConfigError(f"unknown scorer kind: {kind!r}")


def _build_rater(cfg: dict[str, Any], seed: int):
    spec = cfg.get("rater", {})
    kind = spec.get("kind", "stub")
    if kind == "stub":
        return StubRater(seed=int(spec.get("seed", seed)))
    if kind == "stub-labeler":
        return StubLabeler(seed=int(spec.get("seed", seed)),
                           flip_rate=float(spec.get("flip_rate", 0.1)))
    raise ConfigError(f"unknown rater kind: {kind!r}")


class _Run:
    """Collects the run manifest as a stage executes."""

    def __init__(self, command: str, cfg: dict[str, Any], seed: int):
        self.command = command
        self.seed = seed
        self.config_hash = sha256_text(canonical_json(cfg))
        self.started = time.monotonic()
        self.inputs: list[dict[str, str]] = []
        self.outputs: list[dict[str, str]] = []
        self.counts: dict[str, int] = {}
        self.notes: dict[str, Any] = {}

    def add_input(self, path: str) -> None:
        self.inputs.append({"path": path, "sha256": sha256_file(path)})

    def add_output(self, path: str) -> None:
        self.outputs.append({"path": path, "sha256": sha256_file(path)})

    def write(self, output_path: str | None) -> dict[str, Any]:
        manifest = {
            "command": self.command,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "counts": self.counts,
            "notes": self.notes,
            "elapsed_s": round(time.monotonic() - self.started, 6),
        }
        if output_path:
            with open(output_path + ".run.json", "w", encoding="utf-8") as fh:
                json.dump(manifest, fh, indent=2, sort_keys=True, ensure_ascii=False)
                fh.write("\n")
        return manifest


def _read_docs(path: str, tokenizer: TokenizerConfig, reject_path: str | None = None) -> tuple[list[Document], int]:
    rejects: list[ckio.RejectRecord] = []
    docs = list(ckio.read_documents(path, tokenizer=tokenizer, on_reject=rejects.append))
    if reject_path and rejects:
        ckio.write_records((r.to_record() for r in rejects), reject_path)
    return docs, len(rejects)


# ------------------------------------------------------------------- stages


def cmd_filter(args, cfg) -> int:
    tokenizer = _tokenizer(cfg)
    run = _Run("filter", cfg, _seed(cfg, args))
    rules_cfg = cfg.get("rules", {})
    lexicon = tuple(rules_cfg.get("toxic_lexicon", ()))
    if rules_cfg.get("toxic_lexicon_file"):
        from .rules import load_term_file

        lexicon = load_term_file(rules_cfg["toxic_lexicon_file"])
    config = RuleConfig(
        min_tokens=int(rules_cfg.get("min_tokens", 32)),
        max_special_char_ratio=float(rules_cfg.get("max_special_char_ratio", 0.30)),
        toxic_lexicon=lexicon,
        pii_patterns=tuple(rules_cfg.get("pii_patterns", ("email", "phone"))),
    )
    for path in args.input:
        run.add_input(path)
    docs: list[Document] = []
    reject_count = 0
    for path in args.input:
        batch, nrej = _read_docs(path, tokenizer, args.output + ".ingest-rejects.jsonl")
        docs.extend(batch)
        reject_count += nrej
    passed, rejected = filter_stream(docs, config, workers=args.workers)
    ckio.write_documents(passed, args.output)
    ckio.write_records(
        ({**ckio.document_to_record(d), "failed_rules": list(v.failed_rules)} for d, v in rejected),
        args.output + ".rejected.jsonl",
    )
    run.add_output(args.output)
    run.counts = {"input": len(docs), "passed": len(passed), "rejected": len(rejected),
                  "ingest_rejects": reject_count}
    run.write(args.output)
    print(json.dumps(run.counts))
    return EXIT_OK


def cmd_dedup(args, cfg) -> int:
    tokenizer = _tokenizer(cfg)
    seed = _seed(cfg, args)
    run = _Run("dedup", cfg, seed)
    d = cfg.get("dedup", {})
    config = MinHashConfig(
        shingle_size=int(d.get("shingle_size", 5)),
        num_hashes=int(d.get("num_hashes", 128)),
        bands=int(d.get("bands", 16)),
        rows_per_band=int(d.get("rows_per_band", 8)),
        jaccard_threshold=float(d.get("jaccard_threshold", 0.9)),
        seed=int(d.get("seed", seed)),
    )
    docs: list[Document] = []
    for path in args.input:
        run.add_input(path)
        batch, _ = _read_docs(path, tokenizer)
        docs.extend(batch)
    survivors, clusters = dedup_stream(
        docs, config, tokenizer, group_by_source=bool(d.get("group_by_source", False))
    )
    ckio.write_documents(survivors, args.output)
    ckio.write_records((c.to_record() for c in clusters), args.output + ".clusters.jsonl")
    run.add_output(args.output)
    run.counts = {"input": len(docs), "kept": len(survivors),
                  "dropped": len(docs) - len(survivors), "near_dup_clusters": len(clusters)}
    run.write(args.output)
    print(json.dumps(run.counts))
    return EXIT_OK


def _selection_config(cfg: dict[str, Any], tokenizer: TokenizerConfig) -> SelectionConfig:
    sel = cfg.get("selection", {})
    return SelectionConfig(
        scorer=_build_scorer(cfg, tokenizer),
        s_threshold=float(sel.get("s_threshold", 0.0)),
        cf_low=float(sel.get("cf_low", 0.3)),
        cf_high=float(sel.get("cf_high", 1.0)),
        instance_scorer=reference_instance_scorer,
        average_all_turns=bool(sel.get("average_all_turns", False)),
    )


def cmd_confilter(args, cfg) -> int:
    tokenizer = _tokenizer(cfg)
    run = _Run("confilter", cfg, _seed(cfg, args))
    config = _selection_config(cfg, tokenizer)
    dialogues = []
    for path in args.input:
        run.add_input(path)
        dialogues.extend(ckio.read_dialogues(path))
    kept, dropped, errors = select_multi_turn(dialogues, config)
    ckio.write_dialogues((d.dialogue for d in kept), args.output)
    ckio.write_records((d.to_record() for d in kept + dropped), args.output + ".report.jsonl")
    if errors:
        ckio.write_records(
            ({"id": dlg.id, "error": str(exc)} for dlg, exc in errors),
            args.output + ".errors.jsonl",
        )
    run.add_output(args.output)
    run.counts = {"input": len(dialogues), "kept": len(kept), "dropped": len(dropped),
                  "errors": len(errors)}
    run.notes["scorer"] = config.scorer.identity
    run.write(args.output)
    print(json.dumps(run.counts))
    return EXIT_OK


def cmd_select(args, cfg) -> int:
    tokenizer = _tokenizer(cfg)
    run = _Run("select", cfg, _seed(cfg, args))
    sel = cfg.get("selection", {})
    threshold = float(sel.get("s_threshold", 0.0))
    dialogues = []
    for path in args.input:
        run.add_input(path)
        dialogues.extend(ckio.read_dialogues(path))
    kept, dropped, errors = select_single_turn(dialogues, reference_instance_scorer, threshold)

    def with_score(dlg, score):
        rec = ckio.dialogue_to_record(dlg)
        rec["s"] = score.combined
        rec["complexity"] = score.complexity
        rec["quality"] = score.quality
        return rec

    ckio.write_records((with_score(d, s) for d, s in kept), args.output)
    ckio.write_records((with_score(d, s) for d, s in dropped), args.output + ".dropped.jsonl")
    run.add_output(args.output)
    run.counts = {"input": len(dialogues), "kept": len(kept), "dropped": len(dropped),
                  "errors": len(errors)}
    run.write(args.output)
    print(json.dumps(run.counts))
    return EXIT_OK


def cmd_rate(args, cfg) -> int:
    tokenizer = _tokenizer(cfg)
    seed = _seed(cfg, args)
    run = _Run("rate", cfg, seed)
    rater_cfg = cfg.get("rater", {})
    mode = rater_cfg.get("mode", "score")
    docs: list[Document] = []
    for path in args.input:
        run.add_input(path)
        batch, _ = _read_docs(path, tokenizer)
        docs.extend(batch)
    if mode == "label":
        labeler = _build_rater({"rater": {**rater_cfg, "kind": "stub-labeler"}}, seed)
        kept, removed, errors = two_round_agreement(docs, labeler)
    else:
        rater = _build_rater(cfg, seed)
        kept, removed, errors = double_score_filter(
            docs, rater, discrepancy_threshold=float(rater_cfg.get("discrepancy_threshold", 2.0))
        )
    ckio.write_documents((d for d, _ in kept), args.output)
    ckio.write_records((r.to_record() for _, r in removed), args.output + ".removed.jsonl")
    run.add_output(args.output)
    run.counts = {"input": len(docs), "kept": len(kept), "removed": len(removed),
                  "errors": len(errors)}
    run.write(args.output)
    print(json.dumps(run.counts))
    return EXIT_OK


def _mix_spec(cfg: dict[str, Any], seed: int) -> tuple[MixSpec, dict[str, str]]:
    m = cfg.get("mix", {})
    if "stage" not in m:
        raise ConfigError("mix config requires a 'stage' (stable | boost)")
    buckets = m.get("buckets", {})
    if not isinstance(buckets, dict) or not buckets:
        raise ConfigError("mix config requires 'buckets': {bucket_name: dataset_path}")
    if not m.get("token_budget"):
        raise ConfigError("mix config requires a positive 'token_budget'")
    spec = MixSpec(
        stage=m["stage"],
        token_budget=int(m["token_budget"]),
        seed=int(m.get("seed", seed)),
        domain_ratio=tuple(m["domain_ratio"]) if "domain_ratio" in m else (0, 0),
        language_ratio=tuple(m["language_ratio"]) if "language_ratio" in m else (0, 0),
        buckets=tuple(buckets.keys()),
        max_repeats=int(m.get("max_repeats", 1)),
    )
    return spec, {str(k): str(v) for k, v in buckets.items()}


def cmd_mix(args, cfg) -> int:
    tokenizer = _tokenizer(cfg)
    seed = _seed(cfg, args)
    run = _Run("mix", cfg, seed)
    spec, bucket_paths = _mix_spec(cfg, seed)
    pools = {}
    for bucket, path in bucket_paths.items():
        run.add_input(path)
        pools[bucket] = list(ckio.read_documents(path, tokenizer=tokenizer))
    plan = plan_mix(spec)
    if plan.underfilled_cells:
        print(f"warning: budget rounds these cells to zero: {plan.underfilled_cells}",
              file=sys.stderr)
    selected, report = sample_mix(pools, plan)
    ckio.write_documents(selected, args.output)
    with open(args.output + ".mix.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_record(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    run.add_output(args.output)
    run.counts = {"documents": len(selected),
                  "tokens": sum(report.realized.values()),
                  "shortfall_cells": len(report.shortfalls)}
    run.notes["deviation_pct"] = report.deviation_pct
    run.write(args.output)
    print(json.dumps(run.counts))
    return EXIT_OK


def cmd_verify(args, cfg) -> int:
    seed = _seed(cfg, args)
    run = _Run("verify", cfg, seed)
    spec, _ = _mix_spec(cfg, seed)
    tolerance = float(cfg.get("mix", {}).get("tolerance_pct", 1.0))
    path = args.input[0]
    run.add_input(path)
    report = verify_mix(path, spec, tolerance_pct=tolerance)
    print(json.dumps(report.to_record()))
    run.counts = {"passed": int(report.passed)}
    run.write(path + ".verify")
    return EXIT_OK if report.passed else EXIT_DATA


def cmd_dpo(args, cfg) -> int:
    seed = _seed(cfg, args)
    run = _Run("dpo", cfg, seed)
    d = cfg.get("dpo", {})
    subjective = []
    objective = []
    judge = StubJudge(seed=int(d.get("judge_seed", seed)))
    if d.get("subjective_file"):
        run.add_input(d["subjective_file"])
        with open(d["subjective_file"], "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                subjective.append(
                    build_subjective_pair(rec["prompt"], rec["original"], rec["generated"], judge)
                )
    if d.get("objective_file"):
        run.add_input(d["objective_file"])
        with open(d["objective_file"], "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                rec = json.loads(line)
                q = ObjectiveQuestion(
                    id=rec["id"], prompt=rec["prompt"],
                    options=tuple(rec["options"]), answer=rec["answer"],
                )
                objective.append(build_objective_pair(q, seed))
    pairs, report = build_dataset(subjective, objective, seed=seed)
    ckio.write_records((p.to_record() for p in pairs), args.output)
    run.add_output(args.output)
    run.counts = report.to_record()
    run.write(args.output)
    print(json.dumps(report.to_record()))
    return EXIT_OK


def cmd_stats(args, cfg) -> int:
    tokenizer = _tokenizer(cfg)
    out = {}
    for path in args.input:
        manifest = ckio.scan_manifest(path, tokenizer)
        out[path] = manifest.to_record()
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


# -------------------------------------------------------------------- main


def _add_common(p: argparse.ArgumentParser, need_input: bool = True, need_output: bool = True) -> None:
    p.add_argument("--config", default=None, help="pipeline config (JSON)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--workers", type=int, default=1)
    if need_input:
        p.add_argument("--input", nargs="+", required=True)
    if need_output:
        p.add_argument("--output", required=True)


COMMANDS = {
    "filter": (cmd_filter, True, True),
    "dedup": (cmd_dedup, True, True),
    "confilter": (cmd_confilter, True, True),
    "select": (cmd_select, True, True),
    "rate": (cmd_rate, True, True),
    "mix": (cmd_mix, False, True),
    "verify": (cmd_verify, True, False),
    "dpo": (cmd_dpo, False, True),
    "stats": (cmd_stats, True, False),
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="corpuskit", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, need_in, need_out) in COMMANDS.items():
        p = sub.add_parser(name)
        _add_common(p, need_in, need_out)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    handler = COMMANDS[args.command][0]
    try:
        cfg = _load_config(args.config)
        return handler(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ScorerProtocolError as exc:
        print(f"scorer error: {exc}", file=sys.stderr)
        return EXIT_SCORER
    except (ckio.IngestError, MixError, ValueError, KeyError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
