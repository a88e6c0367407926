"""Small neural causal language model with deterministic, seeded weights.

A character-level transformer whose parameters come from a fixed seed, so it
serves reproducible log-probabilities with no model download. It is a
stand-in for whichever production LM scores dialogue turns; the protocol and
the pipeline never depend on its particular values, only on its behavior
(teacher-forced scoring, one nonpositive logprob per continuation token).

The adapter owns tokenization: one token per Unicode code point, hashed into
a fixed embedding table, with index 0 reserved for BOS. The identity string
encodes seed, architecture, and tokenizer so that any change that could move
an output also changes the identity.
"""
from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

torch.set_num_threads(1)  # keeps scoring bit-stable across hosts


@dataclass(frozen=True)
class ModelConfig:
    seed: int = 20240901
    vocab_size: int = 384  # index 0 is BOS; code points hash into 1..vocab_size-1
    dim: int = 48
    layers: int = 2
    heads: int = 4
    max_seq_len: int = 512

    @property
    def identity(self) -> str:
        return (
            f"tiny-causal-char-v1-seed{self.seed}-d{self.dim}-L{self.layers}"
            f"-h{self.heads}-V{self.vocab_size}-ctx{self.max_seq_len}"
        )


class _Block(nn.Module):
    def __init__(self, dim: int, heads: int):
        super().__init__()
        self.norm1 = nn.LayerNorm(dim)
        self.attn = nn.MultiheadAttention(dim, heads, batch_first=True)
        self.norm2 = nn.LayerNorm(dim)
        self.mlp = nn.Sequential(nn.Linear(dim, 4 * dim), nn.GELU(), nn.Linear(4 * dim, dim))

    def forward(self, x: torch.Tensor, mask: torch.Tensor) -> torch.Tensor:
        h = self.norm1(x)
        attn_out, _ = self.attn(h, h, h, attn_mask=mask, need_weights=False)
        x = x + attn_out
        return x + self.mlp(self.norm2(x))


class TinyCausalLM(nn.Module):
    def __init__(self, config: ModelConfig = ModelConfig()):
        super().__init__()
        self.config = config
        torch.manual_seed(config.seed)
        self.tok_emb = nn.Embedding(config.vocab_size, config.dim)
        self.pos_emb = nn.Embedding(config.max_seq_len, config.dim)
        self.blocks = nn.ModuleList(_Block(config.dim, config.heads) for _ in range(config.layers))
        self.norm = nn.LayerNorm(config.dim)
        self.head = nn.Linear(config.dim, config.vocab_size)
        self.eval()

    @property
    def identity(self) -> str:
        return self.config.identity

    def token_ids(self, text: str) -> list[int]:
        mod = self.config.vocab_size - 1
        return [1 + (ord(ch) % mod) for ch in text]

    def tokens(self, text: str) -> list[str]:
        return list(text)

    @torch.no_grad()
    def _logits(self, ids: list[int]) -> torch.Tensor:
        x = torch.tensor([ids], dtype=torch.long)
        h = self.tok_emb(x) + self.pos_emb(torch.arange(len(ids)).unsqueeze(0))
        mask = torch.triu(torch.full((len(ids), len(ids)), float("-inf")), diagonal=1)
        for block in self.blocks:
            h = block(h, mask)
        return self.head(self.norm(h))[0]

    def score(self, context: str, continuation: str) -> tuple[list[str], list[float]]:
        """Teacher-forced per-token log-probabilities of the continuation.

        Raises ValueError("empty") for an empty continuation and
        ValueError("length") when BOS + context + continuation exceeds the
        model's context window.
        """
        cont_tokens = self.tokens(continuation)
        if not cont_tokens:
            raise ValueError("empty continuation")
        ids = [0] + self.token_ids(context) + self.token_ids(continuation)
        if len(ids) > self.config.max_seq_len:
            raise ValueError("length")
        logits = self._logits(ids[:-1])
        logprobs = torch.log_softmax(logits.double(), dim=-1)
        start = 1 + len(self.token_ids(context))
        out: list[float] = []
        for pos in range(start, len(ids)):
            lp = float(logprobs[pos - 1, ids[pos]])
            out.append(min(lp, 0.0))
        return cont_tokens, out
