"""Reference scorer server: serves a built-in backend over the wire protocol.

    python -m corpuskit.scorer_server --uniform 50
    python -m corpuskit.scorer_server --ngram corpus.jsonl --order 2 --add-k 1.0
    python -m corpuskit.scorer_server --ngram-text corpus.txt --order 2

Used by the protocol tests as a real subprocess and as the behavioral
template any external scorer must match. --ngram-text treats the corpus as
one raw-text document per line (no JSON).
"""
from __future__ import annotations

import argparse
import sys

from .io import read_documents
from .protocol import serve_backend
from .scoring import UniformBackend, build_ngram_lm


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="corpuskit-scorer-server")
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--uniform", type=int, metavar="VOCAB_SIZE")
    group.add_argument("--ngram", metavar="CORPUS_JSONL")
    group.add_argument("--ngram-text", metavar="CORPUS_TXT")
    parser.add_argument("--order", type=int, default=3)
    parser.add_argument("--add-k", type=float, default=1.0)
    args = parser.parse_args(argv)

    if args.uniform is not None:
        backend = UniformBackend(vocab_size=args.uniform)
    elif args.ngram is not None:
        texts = [d.text for d in read_documents(args.ngram)]
        backend = build_ngram_lm(texts, order=args.order, add_k=args.add_k)
    else:
        with open(args.ngram_text, "r", encoding="utf-8") as fh:
            texts = [line.rstrip("\n") for line in fh if line.strip()]
        backend = build_ngram_lm(texts, order=args.order, add_k=args.add_k)

    serve_backend(backend, sys.stdin, sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
