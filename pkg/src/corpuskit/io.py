"""Line-delimited record streaming with manifests and first-class rejects.

One JSON object per line. Output order always equals input order, and
malformed lines are surfaced as reject records rather than dropped: silent
data loss would corrupt the ratio accounting every later stage relies on.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Iterator

from .documents import Dialogue, DialogueTurn, Document
from .tokenizer import TokenizerConfig, DEFAULT_TOKENIZER, count_tokens

DOCUMENT_FIELDS = ("id", "text", "language", "domain", "token_count", "source", "quality_score", "fine_label")
DIALOGUE_FIELDS = ("id", "turns", "per_turn_scores", "final_score")


class IngestError(Exception):
    """Unrecoverable read/write failure (not a per-line reject)."""


@dataclass(frozen=True)
class RejectRecord:
    line_number: int
    reason: str
    raw: str

    def to_record(self) -> dict[str, Any]:
        return {"line_number": self.line_number, "reason": self.reason, "raw": self.raw}


@dataclass(frozen=True)
class DatasetManifest:
    path: str
    record_count: int
    token_totals: dict[tuple[str, str], int] = field(default_factory=dict)
    checksum: str = ""

    def to_record(self) -> dict[str, Any]:
        return {
            "path": self.path,
            "record_count": self.record_count,
            "token_totals": {f"{d}/{l}": n for (d, l), n in sorted(self.token_totals.items())},
            "checksum": self.checksum,
        }


def document_to_record(doc: Document) -> dict[str, Any]:
    rec: dict[str, Any] = {
        "id": doc.id,
        "text": doc.text,
        "language": doc.language,
        "domain": doc.domain,
        "token_count": doc.token_count,
        "source": doc.source,
    }
    if doc.quality_score is not None:
        rec["quality_score"] = doc.quality_score
    if doc.fine_label is not None:
        rec["fine_label"] = doc.fine_label
    rec.update(doc.extra)
    return rec


def record_to_document(rec: dict[str, Any], tokenizer: TokenizerConfig = DEFAULT_TOKENIZER) -> Document:
    extra = {k: v for k, v in rec.items() if k not in DOCUMENT_FIELDS}
    token_count = rec.get("token_count")
    if token_count is None:
        token_count = count_tokens(rec["text"], tokenizer)
    return Document(
        id=rec["id"],
        text=rec["text"],
        language=rec["language"],
        domain=rec["domain"],
        token_count=token_count,
        source=rec.get("source", ""),
        quality_score=rec.get("quality_score"),
        fine_label=rec.get("fine_label"),
        extra=extra,
    )


def dialogue_to_record(dlg: Dialogue) -> dict[str, Any]:
    rec: dict[str, Any] = {
        "id": dlg.id,
        "turns": [{"role": t.role, "text": t.text} for t in dlg.turns],
    }
    if dlg.per_turn_scores is not None:
        rec["per_turn_scores"] = list(dlg.per_turn_scores)
    if dlg.final_score is not None:
        rec["final_score"] = dlg.final_score
    rec.update(dlg.extra)
    return rec


def record_to_dialogue(rec: dict[str, Any]) -> Dialogue:
    extra = {k: v for k, v in rec.items() if k not in DIALOGUE_FIELDS}
    turns = tuple(
        DialogueTurn(role=t["role"], text=t["text"], turn_index=i)
        for i, t in enumerate(rec["turns"], start=1)
    )
    scores = rec.get("per_turn_scores")
    return Dialogue(
        id=rec["id"],
        turns=turns,
        per_turn_scores=tuple(scores) if scores is not None else None,
        final_score=rec.get("final_score"),
        extra=extra,
    )


def _read_records(
    path: str,
    parse: Callable[[dict[str, Any]], Any],
    on_reject: Callable[[RejectRecord], None] | None,
) -> Iterator[Any]:
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    with fh:
        for line_number, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if not isinstance(rec, dict):
                    raise ValueError("record is not a JSON object")
                yield parse(rec)
            except (ValueError, KeyError, TypeError) as exc:
                reject = RejectRecord(line_number=line_number, reason=str(exc), raw=line.rstrip("\n"))
                if on_reject is None:
                    raise IngestError(f"{path}:{line_number}: {exc}") from exc
                on_reject(reject)


def read_documents(
    path: str,
    *,
    on_reject: Callable[[RejectRecord], None] | None = None,
    tokenizer: TokenizerConfig = DEFAULT_TOKENIZER,
) -> Iterator[Document]:
    """Yield documents in file order.

    Malformed lines go to on_reject with their line number; with no sink
    configured they raise instead. Unreadable files always raise.
    """
    return _read_records(path, lambda rec: record_to_document(rec, tokenizer), on_reject)


def read_dialogues(
    path: str,
    *,
    on_reject: Callable[[RejectRecord], None] | None = None,
) -> Iterator[Dialogue]:
    return _read_records(path, record_to_dialogue, on_reject)


def _write_lines(records: Iterable[dict[str, Any]], path: str) -> tuple[int, str]:
    """Write records as JSONL via a temp file; returns (count, sha256)."""
    tmp = path + ".tmp"
    h = hashlib.sha256()
    count = 0
    try:
        with open(tmp, "w", encoding="utf-8") as fh:
            for rec in records:
                line = json.dumps(rec, ensure_ascii=False) + "\n"
                fh.write(line)
                h.update(line.encode("utf-8"))
                count += 1
    except Exception:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    os.replace(tmp, path)
    return count, h.hexdigest()


def write_documents(docs: Iterable[Document], path: str) -> DatasetManifest:
    """Write documents in input order; manifest totals computed in one pass."""
    totals: dict[tuple[str, str], int] = {}

    def records() -> Iterator[dict[str, Any]]:
        for doc in docs:
            key = (doc.domain, doc.language)
            totals[key] = totals.get(key, 0) + doc.token_count
            yield document_to_record(doc)

    count, checksum = _write_lines(records(), path)
    return DatasetManifest(path=path, record_count=count, token_totals=totals, checksum=checksum)


def write_dialogues(dialogues: Iterable[Dialogue], path: str) -> DatasetManifest:
    count, checksum = _write_lines((dialogue_to_record(d) for d in dialogues), path)
    return DatasetManifest(path=path, record_count=count, token_totals={}, checksum=checksum)


def write_records(records: Iterable[dict[str, Any]], path: str) -> DatasetManifest:
    """Write arbitrary JSON records (reports, rejects, clusters)."""
    count, checksum = _write_lines(records, path)
    return DatasetManifest(path=path, record_count=count, token_totals={}, checksum=checksum)


def scan_manifest(path: str, tokenizer: TokenizerConfig = DEFAULT_TOKENIZER) -> DatasetManifest:
    """Independent full-scan recount of a document dataset.

    Recomputes token totals from the records themselves, so it can audit the
    manifest a writer produced.
    """
    totals: dict[tuple[str, str], int] = {}
    count = 0
    for doc in read_documents(path, tokenizer=tokenizer):
        key = (doc.domain, doc.language)
        totals[key] = totals.get(key, 0) + doc.token_count
        count += 1
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return DatasetManifest(path=path, record_count=count, token_totals=totals, checksum=h.hexdigest())
