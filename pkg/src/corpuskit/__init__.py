"""corpuskit: corpus curation for LLM training sets.

Stages: rule-based cleaning, exact/near dedup, LM-based multi-turn dialogue
selection, complexity x quality single-turn selection, double-scoring and
agreement filters, two-stage mixture construction at exact token ratios, and
preference-pair building. Stages compose through line-delimited record files
so any stage can be re-run in isolation.
"""

__version__ = "0.1.0"

from .documents import Dialogue, DialogueTurn, Document, dialogue_from_pairs, make_document
from .tokenizer import TokenizerConfig, count_tokens, detect_language, tokenize

__all__ = [
    "Dialogue",
    "DialogueTurn",
    "Document",
    "TokenizerConfig",
    "__version__",
    "count_tokens",
    "detect_language",
    "dialogue_from_pairs",
    "make_document",
    "tokenize",
]
