"""Shared plumbing: stable hashing, seeded RNG derivation, ordered parallel map."""
from __future__ import annotations

import hashlib
import json
import random
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, Sequence, TypeVar

T = TypeVar("T")
R = TypeVar("R")


def stable_u64(*parts: object) -> int:
    """64-bit hash of the given parts, stable across runs and platforms.

    Never use the builtin hash() for anything persisted or seeded: it is
    randomized per process.
    """
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        h.update(repr(p).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest(), "big")


def derive_rng(seed: int, *parts: object) -> random.Random:
    """Independent RNG stream for (seed, parts), insensitive to call order."""
    return random.Random(stable_u64(seed, *parts))


def stable_uniform(seed: int, *parts: object) -> float:
    """Deterministic float in [0, 1) keyed by (seed, parts)."""
    return stable_u64(seed, *parts) / 2**64


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def canonical_json(obj) -> str:
    """Deterministic JSON rendering used for hashing configs and manifests."""
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


def ordered_pmap(fn: Callable[[T], R], items: Sequence[T], workers: int = 1) -> list[R]:
    """Map fn over items, preserving input order in the result.

    workers > 1 fans out across a thread pool; fn must be pure for the
    result to stay deterministic.
    """
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def chunked(items: Iterable[T], size: int) -> Iterable[list[T]]:
    buf: list[T] = []
    for x in items:
        buf.append(x)
        if len(buf) >= size:
            yield buf
            buf = []
    if buf:
        yield buf
