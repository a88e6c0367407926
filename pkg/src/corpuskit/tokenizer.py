"""Deterministic tokenization and code-point based language tagging.

Token-level mixture ratios only need a stable, language-fair counter, so the
default scheme segments runs of letters/digits as one token each and treats
every CJK ideograph as its own token. Chinese text is therefore not
undercounted relative to English. No subword or learned models.
"""
from __future__ import annotations

from dataclasses import dataclass

# Han ideograph blocks (unified + extensions + compatibility). Kana and
# hangul are deliberately excluded: "zh" tagging keys off ideographs.
_CJK_RANGES = (
    (0x3400, 0x4DBF),
    (0x4E00, 0x9FFF),
    (0xF900, 0xFAFF),
    (0x20000, 0x2A6DF),
    (0x2A700, 0x2EBEF),
    (0x30000, 0x3134F),
)

SCHEMES = ("unicode-word", "whitespace")


def is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


@dataclass(frozen=True)
class TokenizerConfig:
    scheme: str = "unicode-word"
    lowercase: bool = False

    def __post_init__(self) -> None:
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown tokenizer scheme: {self.scheme!r}")


DEFAULT_TOKENIZER = TokenizerConfig()


def tokenize(text: str, config: TokenizerConfig = DEFAULT_TOKENIZER) -> list[str]:
    """Split text into tokens. Pure and deterministic for a given config."""
    if config.lowercase:
        text = text.lower()
    if config.scheme == "whitespace":
        return text.split()
    tokens: list[str] = []
    run: list[str] = []
    for ch in text:
        if is_cjk(ch):
            if run:
                tokens.append("".join(run))
                run = []
            tokens.append(ch)
        elif ch.isalnum():
            run.append(ch)
        elif run:
            tokens.append("".join(run))
            run = []
    if run:
        tokens.append("".join(run))
    return tokens


def count_tokens(text: str, config: TokenizerConfig = DEFAULT_TOKENIZER) -> int:
    return len(tokenize(text, config))


def detect_language(text: str, cjk_threshold: float = 0.30) -> str:
    """Tag text as zh / en / other by code-point class ratio.

    zh when CJK code points exceed cjk_threshold of the CJK+Latin letters,
    en when Latin letters dominate the remaining letters, other otherwise
    (no Latin or CJK letters at all, or another script dominates).
    """
    if not text:
        raise ValueError("cannot detect language of empty text")
    cjk = latin = other_alpha = 0
    for ch in text:
        if is_cjk(ch):
            cjk += 1
        elif ch.isalpha():
            # Basic Latin through Latin Extended-B
            if ord(ch) < 0x0250:
                latin += 1
            else:
                other_alpha += 1
    if cjk + latin == 0:
        return "other"
    if cjk / (cjk + latin) > cjk_threshold:
        return "zh"
    if latin > other_alpha:
        return "en"
    return "other"
