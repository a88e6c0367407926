"""Reference rater/labeler/judge server over the wire protocol.

    python -m corpuskit.rater_server --mode score --seed 7
    python -m corpuskit.rater_server --mode label --seed 7 --flip-rate 0.1
    python -m corpuskit.rater_server --mode judge --seed 7

Serves the seeded stubs; real deployments stand up the same protocol in
front of their trained raters.
"""
from __future__ import annotations

import argparse
import json
import sys

from .dpo import StubJudge
from .protocol import PROTOCOL_VERSION, serve_rater
from .rating import StubLabeler, StubRater


def _serve_judge(judge: StubJudge, infile, outfile, identity: str) -> None:
    outfile.write(json.dumps({"protocol": PROTOCOL_VERSION, "model": identity}) + "\n")
    outfile.flush()
    for line in infile:
        if not line.strip():
            continue
        rid = None
        try:
            req = json.loads(line)
            rid = req.get("id")
            resp = {"id": rid, "scores": judge(req["prompt"], req["response"])}
        except Exception as exc:
            resp = {"id": rid, "error": str(exc) or exc.__class__.__name__}
        outfile.write(json.dumps(resp) + "\n")
        outfile.flush()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="corpuskit-rater-server")
    parser.add_argument("--mode", choices=("score", "label", "judge"), default="score")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--flip-rate", type=float, default=0.1)
    args = parser.parse_args(argv)

    if args.mode == "score":
        rater = StubRater(seed=args.seed)
        serve_rater(rater, sys.stdin, sys.stdout, f"stub-rater-seed{args.seed}", key="score")
    elif args.mode == "label":
        labeler = StubLabeler(seed=args.seed, flip_rate=args.flip_rate)
        serve_rater(labeler, sys.stdin, sys.stdout,
                    f"stub-labeler-seed{args.seed}-flip{args.flip_rate}", key="label")
    else:
        _serve_judge(StubJudge(seed=args.seed), sys.stdin, sys.stdout,
                     f"stub-judge-seed{args.seed}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
