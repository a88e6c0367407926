"""Log-probability scoring backends.

A backend supplies one natural-log probability per continuation token, each
conditioned on all context tokens plus the preceding continuation tokens.
The built-in backends are a fixed-order add-k n-gram model (exactly
hand-checkable, which the selection math's tests require) and a context-free
uniform model. Neural scorers attach through the wire protocol in
corpuskit.protocol. Every backend carries an identity string that is
recorded into score records; if a backend's outputs change, its identity
must change.
"""
from __future__ import annotations

import hashlib
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Protocol

from .documents import Document
from .tokenizer import TokenizerConfig, DEFAULT_TOKENIZER, tokenize

BOS = "<s>"
UNK = "<unk>"


@dataclass(frozen=True)
class TokenLogProbs:
    tokens: tuple[str, ...]
    logprobs: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.tokens) != len(self.logprobs):
            raise ValueError("tokens and logprobs must have the same length")
        for lp in self.logprobs:
            if lp > 0.0:
                raise ValueError(f"logprob {lp} is positive; probabilities cannot exceed 1")

    @property
    def total(self) -> float:
        return sum(self.logprobs)

    @property
    def mean_nll(self) -> float:
        return -self.total / len(self.logprobs)


class ScorerBackend(Protocol):
    """What selection needs from a scorer: kind, identity, and logprobs."""

    kind: str
    identity: str

    def sequence_logprobs(self, context: str, continuation: str) -> TokenLogProbs: ...


def sequence_logprobs(backend: ScorerBackend, context: str, continuation: str) -> TokenLogProbs:
    return backend.sequence_logprobs(context, continuation)


@dataclass(frozen=True)
class NgramLM:
    """Fixed-order add-k n-gram model with an explicit unknown token.

    No backoff: P(w | ctx) = (count(ctx, w) + k) / (count(ctx) + k * |V|)
    with |V| counting the unknown token, so probabilities over the
    vocabulary sum to one for every context. Contexts are padded with BOS
    markers, which are not vocabulary members.
    """

    order: int
    add_k: float
    vocabulary: frozenset[str]
    counts: dict[tuple[str, ...], Counter]
    context_totals: dict[tuple[str, ...], int]
    tokenizer: TokenizerConfig = DEFAULT_TOKENIZER
    identity: str = ""
    kind: str = field(default="ngram", init=False)

    def _lookup(self, token: str) -> str:
        return token if token in self.vocabulary else UNK

    def probability(self, context: tuple[str, ...], token: str) -> float:
        """P(token | last order-1 tokens of context), add-k smoothed."""
        ctx = tuple(t if t == BOS else self._lookup(t) for t in context[-(self.order - 1):]) if self.order > 1 else ()
        w = self._lookup(token)
        num = self.counts.get(ctx, Counter())[w] + self.add_k
        den = self.context_totals.get(ctx, 0) + self.add_k * len(self.vocabulary)
        return num / den

    def sequence_logprobs(self, context: str, continuation: str) -> TokenLogProbs:
        cont_tokens = tokenize(continuation, self.tokenizer)
        if not cont_tokens:
            raise ValueError("continuation is empty after tokenization")
        prefix = [BOS] * (self.order - 1) + tokenize(context, self.tokenizer)
        logprobs: list[float] = []
        for tok in cont_tokens:
            logprobs.append(math.log(self.probability(tuple(prefix), tok)))
            prefix.append(tok)
        return TokenLogProbs(tokens=tuple(cont_tokens), logprobs=tuple(logprobs))


def build_ngram_lm(
    corpus: Iterable[Document | str],
    order: int = 3,
    add_k: float = 1.0,
    tokenizer: TokenizerConfig = DEFAULT_TOKENIZER,
) -> NgramLM:
    """Train an n-gram model on a corpus of documents or raw strings.

    Deterministic, and counts are independent of document order. Tokens
    never seen at all map to the reserved unknown token at query time.
    """
    if order < 1:
        raise ValueError("order must be >= 1")
    if add_k <= 0:
        raise ValueError("add_k must be positive")
    texts = [doc.text if isinstance(doc, Document) else doc for doc in corpus]
    if not texts:
        raise ValueError("cannot build an n-gram model from an empty corpus")

    vocab: set[str] = set()
    tokenized: list[list[str]] = []
    for text in texts:
        tokens = tokenize(text, tokenizer)
        tokenized.append(tokens)
        vocab.update(tokens)
    vocab.add(UNK)

    counts: dict[tuple[str, ...], Counter] = {}
    context_totals: dict[tuple[str, ...], int] = {}
    for tokens in tokenized:
        seq = [BOS] * (order - 1) + tokens
        for pos in range(order - 1, len(seq)):
            ctx = tuple(seq[pos - order + 1 : pos])
            counts.setdefault(ctx, Counter())[seq[pos]] += 1
            context_totals[ctx] = context_totals.get(ctx, 0) + 1

    fingerprint = hashlib.blake2b(digest_size=6)
    for ctx in sorted(counts):
        for tok, n in sorted(counts[ctx].items()):
            fingerprint.update(f"{ctx}|{tok}|{n}".encode("utf-8"))
    identity = f"ngram-{order}g-addk{add_k}-{fingerprint.hexdigest()}"

    return NgramLM(
        order=order,
        add_k=add_k,
        vocabulary=frozenset(vocab),
        counts=counts,
        context_totals=context_totals,
        tokenizer=tokenizer,
        identity=identity,
    )


@dataclass(frozen=True)
class UniformBackend:
    """Context-free backend assigning 1/|V| to every token; test oracle."""

    vocab_size: int
    tokenizer: TokenizerConfig = DEFAULT_TOKENIZER
    kind: str = field(default="uniform", init=False)

    def __post_init__(self) -> None:
        if self.vocab_size < 1:
            raise ValueError("vocab_size must be >= 1")

    @property
    def identity(self) -> str:
        return f"uniform-v{self.vocab_size}"

    def sequence_logprobs(self, context: str, continuation: str) -> TokenLogProbs:
        tokens = tokenize(continuation, self.tokenizer)
        if not tokens:
            raise ValueError("continuation is empty after tokenization")
        lp = -math.log(self.vocab_size)
        return TokenLogProbs(tokens=tuple(tokens), logprobs=tuple(lp for _ in tokens))
