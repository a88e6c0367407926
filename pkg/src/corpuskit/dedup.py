"""Exact and near-duplicate removal.

Exact dedup keys on whitespace-normalized text. Near-dup detection is
MinHash + LSH banding for candidate generation only: every candidate pair is
verified with exact Jaccard over token shingles before it may join a
cluster, so emitted clusters are sound by construction. Keep-first
tie-breaking makes the survivor set deterministic for a given input order
and seed.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .documents import Document
from .tokenizer import TokenizerConfig, DEFAULT_TOKENIZER, tokenize

_MERSENNE_PRIME_32 = np.uint64(4294967291)  # largest 32-bit prime


@dataclass(frozen=True)
class MinHashConfig:
    shingle_size: int = 5
    num_hashes: int = 128
    bands: int = 16
    rows_per_band: int = 8
    jaccard_threshold: float = 0.9
    seed: int = 0

    def __post_init__(self) -> None:
        if self.bands * self.rows_per_band != self.num_hashes:
            raise ValueError(
                f"bands ({self.bands}) x rows_per_band ({self.rows_per_band}) "
                f"must equal num_hashes ({self.num_hashes})"
            )
        if self.shingle_size < 1:
            raise ValueError("shingle_size must be >= 1")
        if not (0.0 < self.jaccard_threshold <= 1.0):
            raise ValueError("jaccard_threshold must lie in (0, 1]")


@dataclass(frozen=True)
class DupCluster:
    """First id is kept, the rest are dropped."""

    ids: tuple[str, ...]
    jaccard_min: float

    @property
    def kept_id(self) -> str:
        return self.ids[0]

    @property
    def dropped_ids(self) -> tuple[str, ...]:
        return self.ids[1:]

    def to_record(self) -> dict:
        return {
            "kept_id": self.kept_id,
            "dropped_ids": list(self.dropped_ids),
            "jaccard_min": self.jaccard_min,
        }


def normalize_text(text: str) -> str:
    """Trim and collapse whitespace runs; the exact-dedup key."""
    return " ".join(text.split())


def exact_dedup(docs: Iterable[Document], group_by_source: bool = False) -> list[Document]:
    """Keep the first occurrence per normalized text, preserving order.

    group_by_source=True scopes dedup within each source instead of
    globally.
    """
    seen: set = set()
    kept: list[Document] = []
    for doc in docs:
        digest = hashlib.blake2b(normalize_text(doc.text).encode("utf-8"), digest_size=16).digest()
        key = (doc.source, digest) if group_by_source else digest
        if key not in seen:
            seen.add(key)
            kept.append(doc)
    return kept


def shingle_set(tokens: Sequence[str], size: int) -> frozenset[str]:
    return frozenset(
        "\x1f".join(tokens[i : i + size]) for i in range(len(tokens) - size + 1)
    )


def jaccard(a: frozenset, b: frozenset) -> float:
    if not a and not b:
        return 1.0
    inter = len(a & b)
    return inter / (len(a) + len(b) - inter)


def _shingle_hashes(shingles: frozenset[str]) -> np.ndarray:
    vals = [
        int.from_bytes(hashlib.blake2b(s.encode("utf-8"), digest_size=8).digest(), "big")
        for s in shingles
    ]
    return np.array(vals, dtype=np.uint64) % _MERSENNE_PRIME_32


def _signature(hashes: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # (a * x + b) mod p, vectorized over hash functions x shingles.
    # a, b, x all < 2**32 so the uint64 products cannot overflow.
    products = a[:, None] * hashes[None, :] + b[:, None]
    return (products % _MERSENNE_PRIME_32).min(axis=1)


class _UnionFind:
    def __init__(self, n: int) -> None:
        self.parent = list(range(n))

    def find(self, x: int) -> int:
        while self.parent[x] != x:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, x: int, y: int) -> None:
        rx, ry = self.find(x), self.find(y)
        if rx != ry:
            # smaller index wins the root so keep-first stays stable
            if rx > ry:
                rx, ry = ry, rx
            self.parent[ry] = rx


def near_dup_clusters(
    docs: Iterable[Document],
    config: MinHashConfig = MinHashConfig(),
    tokenizer: TokenizerConfig = DEFAULT_TOKENIZER,
) -> list[DupCluster]:
    """Cluster near-duplicates via LSH candidates verified by exact Jaccard.

    Documents shorter than shingle_size tokens are skipped here (exact dedup
    still covers them). Clusters list ids in first-seen order.
    """
    docs = list(docs)
    entries: list[tuple[int, str, frozenset[str]]] = []
    for idx, doc in enumerate(docs):
        tokens = tokenize(doc.text, tokenizer)
        if len(tokens) < config.shingle_size:
            continue
        entries.append((idx, doc.id, shingle_set(tokens, config.shingle_size)))
    if not entries:
        return []

    rng = np.random.default_rng(config.seed)
    a = rng.integers(1, int(_MERSENNE_PRIME_32), size=config.num_hashes, dtype=np.uint64)
    b = rng.integers(0, int(_MERSENNE_PRIME_32), size=config.num_hashes, dtype=np.uint64)

    signatures = [_signature(_shingle_hashes(sh), a, b) for _, _, sh in entries]

    buckets: dict[tuple[int, bytes], list[int]] = {}
    for e_idx, sig in enumerate(signatures):
        for band in range(config.bands):
            lo = band * config.rows_per_band
            key = (band, sig[lo : lo + config.rows_per_band].tobytes())
            buckets.setdefault(key, []).append(e_idx)

    candidate_pairs: set[tuple[int, int]] = set()
    for members in buckets.values():
        if len(members) < 2:
            continue
        for i in range(len(members)):
            for j in range(i + 1, len(members)):
                candidate_pairs.add((members[i], members[j]))

    uf = _UnionFind(len(entries))
    pair_jaccard: dict[tuple[int, int], float] = {}
    for i, j in sorted(candidate_pairs):
        sim = jaccard(entries[i][2], entries[j][2])
        if sim >= config.jaccard_threshold:
            pair_jaccard[(i, j)] = sim
            uf.union(i, j)

    groups: dict[int, list[int]] = {}
    for e_idx in range(len(entries)):
        groups.setdefault(uf.find(e_idx), []).append(e_idx)

    clusters: list[DupCluster] = []
    for root in sorted(groups):
        members = sorted(groups[root])
        if len(members) < 2:
            continue
        member_set = set(members)
        sims = [s for (i, j), s in pair_jaccard.items() if i in member_set and j in member_set]
        clusters.append(
            DupCluster(
                ids=tuple(entries[m][1] for m in members),
                jaccard_min=min(sims),
            )
        )
    return clusters


def near_dedup(
    docs: Iterable[Document],
    config: MinHashConfig = MinHashConfig(),
    tokenizer: TokenizerConfig = DEFAULT_TOKENIZER,
) -> tuple[list[Document], list[DupCluster]]:
    """Drop all but the first-seen member of every near-dup cluster."""
    docs = list(docs)
    clusters = near_dup_clusters(docs, config, tokenizer)
    dropped = {doc_id for c in clusters for doc_id in c.dropped_ids}
    return [d for d in docs if d.id not in dropped], clusters


def dedup_stream(
    docs: Iterable[Document],
    config: MinHashConfig = MinHashConfig(),
    tokenizer: TokenizerConfig = DEFAULT_TOKENIZER,
    group_by_source: bool = False,
) -> tuple[list[Document], list[DupCluster]]:
    """Exact dedup followed by near-dup removal; the standard cleaning pass."""
    survivors = exact_dedup(docs, group_by_source=group_by_source)
    return near_dedup(survivors, config, tokenizer)
