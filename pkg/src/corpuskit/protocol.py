"""Scorer wire protocol: line-delimited JSON over stdio or a local socket.

Handshake: the first line a server emits is {"protocol": 1, "model": <id>}.
Requests are {"id", "context", "continuation"}, one per line; responses are
{"id", "tokens": [...], "logprobs": [...]} (natural log) or {"id", "error"}.
Ids must be echoed exactly; responses may arrive out of order, the client
matches them back up. The same framing also carries rater/labeler traffic
({"id", "text", "round"} -> {"id", "score"} or {"id", "label"}).
"""
from __future__ import annotations

import json
import socket
import subprocess
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

from .scoring import TokenLogProbs

PROTOCOL_VERSION = 1


class ScorerProtocolError(Exception):
    """External scorer failure; retriable ones are safe to resend."""

    def __init__(self, message: str, request_id: str | None = None, retriable: bool = False):
        super().__init__(message)
        self.request_id = request_id
        self.retriable = retriable


# --------------------------------------------------------------- server side


def serve_backend(backend, infile, outfile) -> None:
    """Serve a scoring backend over text streams until EOF.

    Reference server behavior: serial, one response per request line, errors
    never kill the loop. Used to exercise the client against a real
    subprocess and as the template external scorers must match.
    """
    handshake = {"protocol": PROTOCOL_VERSION, "model": backend.identity}
    outfile.write(json.dumps(handshake) + "\n")
    outfile.flush()
    for line in infile:
        if not line.strip():
            continue
        rid: Any = None
        try:
            req = json.loads(line)
            rid = req.get("id")
            result = backend.sequence_logprobs(req["context"], req["continuation"])
            resp = {"id": rid, "tokens": list(result.tokens), "logprobs": list(result.logprobs)}
        except Exception as exc:
            resp = {"id": rid, "error": str(exc) or exc.__class__.__name__}
        outfile.write(json.dumps(resp) + "\n")
        outfile.flush()


def serve_rater(rate: Callable[[str, str, int], Any], infile, outfile, identity: str, key: str = "score") -> None:
    """Serve a rater/labeler callable over the same framing."""
    outfile.write(json.dumps({"protocol": PROTOCOL_VERSION, "model": identity}) + "\n")
    outfile.flush()
    for line in infile:
        if not line.strip():
            continue
        rid: Any = None
        try:
            req = json.loads(line)
            rid = req.get("id")
            resp = {"id": rid, key: rate(rid, req["text"], req["round"])}
        except Exception as exc:
            resp = {"id": rid, "error": str(exc) or exc.__class__.__name__}
        outfile.write(json.dumps(resp) + "\n")
        outfile.flush()


# --------------------------------------------------------------- client side


class _LineTransport:
    """Read/write JSON lines against a subprocess or socket."""

    def __init__(self, reader, writer, closer: Callable[[], None]):
        self._reader = reader
        self._writer = writer
        self._closer = closer

    @classmethod
    def spawn(cls, argv: Sequence[str]) -> "_LineTransport":
        proc = subprocess.Popen(
            list(argv),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )

        def closer() -> None:
            try:
                proc.stdin.close()
            except OSError:
                pass
            proc.wait(timeout=10)

        return cls(proc.stdout, proc.stdin, closer)

    @classmethod
    def connect(cls, host: str, port: int) -> "_LineTransport":
        sock = socket.create_connection((host, port))
        fh = sock.makefile("rw", encoding="utf-8", newline="\n")
        return cls(fh, fh, sock.close)

    def send(self, obj: dict) -> None:
        self._writer.write(json.dumps(obj) + "\n")
        self._writer.flush()

    def recv(self, timeout: float | None = None) -> dict | None:
        line = self._reader.readline()
        if not line:
            return None
        try:
            return json.loads(line)
        except json.JSONDecodeError as exc:
            raise ScorerProtocolError(f"invalid JSON from server: {line!r}") from exc

    def close(self) -> None:
        self._closer()


class WireClient:
    """Base request/response client: handshake, id matching, buffering.

    Shared by the scorer, rater/labeler, and judge clients, which differ
    only in payload shape.
    """

    def __init__(self, transport: _LineTransport, timeout: float = 60.0):
        self._transport = transport
        self._timeout = timeout
        self._pending: dict[str, dict] = {}
        self._counter = 0
        handshake = transport.recv()
        if not handshake or "protocol" not in handshake or "model" not in handshake:
            raise ScorerProtocolError(f"bad handshake: {handshake!r}")
        if handshake["protocol"] != PROTOCOL_VERSION:
            raise ScorerProtocolError(f"unsupported protocol version {handshake['protocol']!r}")
        self.identity: str = handshake["model"]

    @classmethod
    def from_command(cls, argv: Sequence[str], timeout: float = 60.0):
        return cls(_LineTransport.spawn(argv), timeout)

    @classmethod
    def from_socket(cls, host: str, port: int, timeout: float = 60.0):
        return cls(_LineTransport.connect(host, port), timeout)

    def _next_id(self) -> str:
        self._counter += 1
        return f"r{self._counter}"

    def _await(self, rid: str) -> dict:
        if rid in self._pending:
            return self._pending.pop(rid)
        deadline = time.monotonic() + self._timeout
        while time.monotonic() < deadline:
            resp = self._transport.recv()
            if resp is None:
                raise ScorerProtocolError("scorer closed the stream", request_id=rid, retriable=True)
            got = resp.get("id")
            if got == rid:
                return resp
            if got is None:
                raise ScorerProtocolError(f"response without id: {resp!r}", request_id=rid, retriable=True)
            self._pending[str(got)] = resp
        raise ScorerProtocolError("timed out waiting for scorer", request_id=rid, retriable=True)

    def call(self, payload: dict, result_key: str, rid: str | None = None):
        """One request/response; returns response[result_key] or raises."""
        if rid is None:
            rid = self._next_id()
        self._transport.send({"id": rid, **payload})
        resp = self._await(rid)
        if "error" in resp:
            raise ScorerProtocolError(f"remote error: {resp['error']}", request_id=rid)
        if result_key not in resp:
            raise ScorerProtocolError(
                f"response lacks {result_key!r}: {resp!r}", request_id=rid, retriable=True
            )
        return resp[result_key]

    def close(self) -> None:
        self._transport.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


class ExternalScorerClient(WireClient):
    """Client for an external scorer speaking the wire protocol.

    Supports pipelined requests matched by id; per-request determinism is
    the backend's responsibility (its identity string must change if its
    outputs change).
    """

    kind = "external"

    def submit(self, context: str, continuation: str) -> str:
        """Pipelined send; pair with collect(). Responses may interleave."""
        rid = self._next_id()
        self._transport.send({"id": rid, "context": context, "continuation": continuation})
        return rid

    def collect(self, rid: str) -> TokenLogProbs:
        resp = self._await(rid)
        if "error" in resp:
            raise ScorerProtocolError(f"scorer error: {resp['error']}", request_id=rid)
        try:
            return TokenLogProbs(tokens=tuple(resp["tokens"]), logprobs=tuple(resp["logprobs"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ScorerProtocolError(
                f"malformed scorer response: {exc}", request_id=rid, retriable=True
            ) from exc

    def sequence_logprobs(self, context: str, continuation: str) -> TokenLogProbs:
        return self.collect(self.submit(context, continuation))


class ExternalRater(WireClient):
    """Rater over the wire: {"id", "text", "round"} -> {"id", "score"}.

    The wire id is the record id, so the remote sees the same identity a
    local rater would.
    """

    def __call__(self, record_id: str, text: str, round_no: int) -> float:
        return float(self.call({"text": text, "round": round_no}, "score", rid=record_id))


class ExternalLabeler(WireClient):
    """Labeler over the wire: {"id", "text", "round"} -> {"id", "label"}."""

    def __call__(self, record_id: str, text: str, round_no: int) -> str:
        return str(self.call({"text": text, "round": round_no}, "label", rid=record_id))


class ExternalJudge(WireClient):
    """Judge over the wire: {"id", "prompt", "response"} -> {"id", "scores"}."""

    def __call__(self, prompt: str, response: str) -> dict:
        scores = self.call({"prompt": prompt, "response": response}, "scores")
        if not isinstance(scores, dict):
            raise ScorerProtocolError(f"judge scores must be an object, got {scores!r}")
        return scores


# ------------------------------------------------------- conformance harness


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ConformanceReport:
    model: str | None = None
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def summary(self) -> str:
        lines = [f"{'PASS' if c.passed else 'FAIL'}  {c.name}  {c.detail}".rstrip() for c in self.checks]
        return "\n".join(lines)


def load_transcript(path: str) -> list[dict]:
    steps = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                steps.append(json.loads(line))
    return steps


def run_conformance(argv: Sequence[str], transcript: Iterable[dict]) -> ConformanceReport:
    """Replay a golden transcript against a scorer server command.

    Transcript steps are {"name", "request", "expect"} where expect is one
    of: "logprobs" (shape law: one nonpositive logprob per token, id
    echoed), "error" (error response, id echoed, process survives), or
    "logprobs_or_length_error" (servers without a length limit may answer an
    over-length probe normally). Checks are structural only; no step depends
    on a specific model's values.
    """
    report = ConformanceReport()
    transport = _LineTransport.spawn(argv)
    try:
        handshake = transport.recv()
        hs_ok = (
            isinstance(handshake, dict)
            and handshake.get("protocol") == PROTOCOL_VERSION
            and isinstance(handshake.get("model"), str)
            and handshake["model"] != ""
        )
        report.model = handshake.get("model") if isinstance(handshake, dict) else None
        report.checks.append(
            CheckResult("handshake", hs_ok, f"first line: {handshake!r}")
        )
        if not hs_ok:
            return report

        for step in transcript:
            name = step.get("name", "step")
            expect = step["expect"]
            if "raw" in step:
                transport._writer.write(step["raw"] + "\n")
                transport._writer.flush()
            else:
                transport.send(step["request"])
            resp = transport.recv()
            if resp is None:
                report.checks.append(CheckResult(name, False, "server closed the stream"))
                return report
            rid = step.get("request", {}).get("id")
            problems: list[str] = []
            if "raw" not in step and resp.get("id") != rid:
                problems.append(f"id not echoed: sent {rid!r}, got {resp.get('id')!r}")
            is_error = "error" in resp
            if expect == "error" and not is_error:
                problems.append(f"expected an error response, got {resp!r}")
            if expect == "logprobs":
                if is_error:
                    problems.append(f"unexpected error: {resp['error']!r}")
                else:
                    problems.extend(_check_logprobs_shape(resp))
            if expect == "logprobs_or_length_error" and not is_error:
                problems.extend(_check_logprobs_shape(resp))
            report.checks.append(CheckResult(name, not problems, "; ".join(problems)))

        # the server must still answer after the error probes above
        transport.send({"id": "liveness", "context": "", "continuation": "ok"})
        resp = transport.recv()
        alive = isinstance(resp, dict) and resp.get("id") == "liveness"
        report.checks.append(CheckResult("liveness-after-errors", alive, f"got {resp!r}"))
    finally:
        try:
            transport.close()
        except Exception:
            pass
    return report


def _check_logprobs_shape(resp: dict) -> list[str]:
    problems = []
    tokens = resp.get("tokens")
    logprobs = resp.get("logprobs")
    if not isinstance(tokens, list) or not isinstance(logprobs, list):
        return [f"missing tokens/logprobs arrays: {resp!r}"]
    if len(tokens) != len(logprobs):
        problems.append(f"shape law violated: {len(tokens)} tokens vs {len(logprobs)} logprobs")
    if not logprobs:
        problems.append("empty logprobs for a non-error response")
    for lp in logprobs:
        if not isinstance(lp, (int, float)) or lp > 0.0:
            problems.append(f"logprob {lp!r} is not a nonpositive number")
            break
    return problems
