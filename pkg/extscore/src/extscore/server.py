"""Scorer protocol server around the seeded causal LM.

Speaks the line-delimited JSON protocol: first line out is the handshake
{"protocol": 1, "model": <identity>}; each request line
{"id", "context", "continuation"} gets exactly one response line, either
{"id", "tokens", "logprobs"} (natural log) or {"id", "error"}. Requests are
served serially in arrival order; errors never kill the loop. Transports:
stdio (default) or a local TCP socket.
"""
from __future__ import annotations

import argparse
import json
import socket
import sys

from .model import ModelConfig, TinyCausalLM

PROTOCOL_VERSION = 1


def handle_line(model: TinyCausalLM, line: str) -> dict:
    rid = None
    try:
        req = json.loads(line)
        if not isinstance(req, dict):
            raise ValueError("request is not a JSON object")
        rid = req.get("id")
        tokens, logprobs = model.score(req["context"], req["continuation"])
        return {"id": rid, "tokens": tokens, "logprobs": logprobs}
    except KeyError as exc:
        return {"id": rid, "error": f"missing field {exc.args[0]!r}"}
    except ValueError as exc:
        return {"id": rid, "error": str(exc) or "invalid request"}
    except Exception as exc:  # malformed JSON and anything else
        return {"id": rid, "error": f"{exc.__class__.__name__}: {exc}"}


def serve_streams(model: TinyCausalLM, infile, outfile) -> None:
    outfile.write(json.dumps({"protocol": PROTOCOL_VERSION, "model": model.identity}) + "\n")
    outfile.flush()
    for line in infile:
        if not line.strip():
            continue
        outfile.write(json.dumps(handle_line(model, line), ensure_ascii=False) + "\n")
        outfile.flush()


def serve_socket(model: TinyCausalLM, host: str, port: int, max_connections: int | None = None) -> None:
    """Accept connections serially; each gets its own handshake + loop."""
    server = socket.create_server((host, port))
    served = 0
    try:
        while max_connections is None or served < max_connections:
            conn, _ = server.accept()
            with conn, conn.makefile("rw", encoding="utf-8", newline="\n") as fh:
                serve_streams(model, fh, fh)
            served += 1
    finally:
        server.close()


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="extscore-serve", description=__doc__)
    parser.add_argument("--seed", type=int, default=ModelConfig.seed)
    parser.add_argument("--max-seq-len", type=int, default=ModelConfig.max_seq_len)
    parser.add_argument("--dim", type=int, default=ModelConfig.dim)
    parser.add_argument("--layers", type=int, default=ModelConfig.layers)
    parser.add_argument("--transport", choices=("stdio", "socket"), default="stdio")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=7349)
    parser.add_argument("--max-connections", type=int, default=None,
                        help="socket transport: stop after N connections (default: serve forever)")
    args = parser.parse_args(argv)

    config = ModelConfig(seed=args.seed, max_seq_len=args.max_seq_len,
                         dim=args.dim, layers=args.layers)
    model = TinyCausalLM(config)
    if args.transport == "socket":
        serve_socket(model, args.host, args.port, args.max_connections)
    else:
        serve_streams(model, sys.stdin, sys.stdout)
    return 0


if __name__ == "__main__":
    sys.exit(main())
