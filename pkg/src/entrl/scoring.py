"""Record scoring shared by the batch command and the line-protocol service.

One JSON object per line in, one per line out.  A malformed line produces an
error object in the same position instead of aborting the run, so output
line counts always equal input line counts.  The service speaks the same
format over a TCP stream socket (or stdin/stdout) and is stateless; batch
and service paths call the same scoring function, so their breakdowns agree
field for field.
"""

from __future__ import annotations

import json
import socketserver
from dataclasses import dataclass

from .evalkit import entity_accuracy
from .reward import RewardBreakdown, RewardConfig, compute_reward
from .textnorm import GoldEntitySet

__all__ = [
    "RecordError",
    "ScoreSummary",
    "decode_line",
    "score_record",
    "summarize",
    "score_lines",
    "RewardService",
    "serve_stdio",
]


class RecordError(ValueError):
    """A single input record is unusable; processing continues."""


def decode_line(raw: bytes | str) -> dict:
    """Decode one input line to a JSON object, strictly UTF-8."""
    if isinstance(raw, bytes):
        try:
            raw = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise RecordError(f"invalid UTF-8: {exc}") from None
    raw = raw.strip()
    if not raw:
        raise RecordError("empty line")
    try:
        obj = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise RecordError(f"invalid JSON: {exc}") from None
    if not isinstance(obj, dict):
        raise RecordError("record is not a JSON object")
    return obj


def _ref_lengths_from(record: dict, config: RewardConfig) -> list[int]:
    has_lengths = "ref_lengths" in record
    has_refs = "refs" in record
    if has_lengths == has_refs:
        raise RecordError("exactly one of ref_lengths/refs is required")
    if has_lengths:
        lengths = record["ref_lengths"]
        if not isinstance(lengths, list) or not lengths:
            raise RecordError("ref_lengths must be a non-empty list")
        if not all(isinstance(n, int) and not isinstance(n, bool) and n > 0 for n in lengths):
            raise RecordError("ref_lengths must be positive integers")
        return lengths
    refs = record["refs"]
    if not isinstance(refs, list) or not refs or not all(isinstance(r, str) for r in refs):
        raise RecordError("refs must be a non-empty list of strings")
    if config.length_unit == "tokens":
        lengths = [len(r.split()) for r in refs]
    else:
        lengths = [len(r) for r in refs]
    if any(n <= 0 for n in lengths):
        raise RecordError("a reference has zero length")
    return lengths


def score_record(record: dict, config: RewardConfig) -> tuple[dict, RewardBreakdown]:
    """Validate and score one record; returns the reply object and breakdown."""
    rid = record.get("id")
    if not isinstance(rid, str):
        raise RecordError("missing or non-string id")
    response = record.get("response")
    if not isinstance(response, str):
        raise RecordError(f"record {rid!r}: missing or non-string response")
    aliases = record.get("gold_aliases")
    if not isinstance(aliases, list) or not aliases or not all(isinstance(a, str) for a in aliases):
        raise RecordError(f"record {rid!r}: gold_aliases must be a non-empty list of strings")
    ref_lengths = _ref_lengths_from(record, config)
    try:
        gold = GoldEntitySet(rid, tuple(aliases))
    except ValueError as exc:
        raise RecordError(f"record {rid!r}: {exc}") from None
    breakdown = compute_reward(response, gold, ref_lengths, config)
    reply = {
        "id": rid,
        "fmt": breakdown.fmt_gate,
        "len": breakdown.len_gate,
        "match": breakdown.match,
        "reward": breakdown.reward,
    }
    return reply, breakdown


@dataclass(frozen=True)
class ScoreSummary:
    """Aggregate view of one scored batch."""

    n_records: int
    entity_accuracy_pct: float
    mean_reward: float
    gate_failure_counts: dict

    def to_dict(self) -> dict:
        return {
            "n_records": self.n_records,
            "entity_accuracy_pct": self.entity_accuracy_pct,
            "mean_reward": self.mean_reward,
            "gate_failure_counts": dict(self.gate_failure_counts),
        }


def summarize(breakdowns: list[RewardBreakdown]) -> ScoreSummary:
    """Aggregate scored records; length failures are counted among parsed ones."""
    if not breakdowns:
        return ScoreSummary(0, 0.0, 0.0, {"fmt": 0, "len": 0})
    fmt_failures = sum(1 for b in breakdowns if b.fmt_gate == 0)
    len_failures = sum(1 for b in breakdowns if b.fmt_gate == 1 and b.len_gate == 0)
    return ScoreSummary(
        n_records=len(breakdowns),
        entity_accuracy_pct=entity_accuracy(breakdowns),
        mean_reward=sum(b.reward for b in breakdowns) / len(breakdowns),
        gate_failure_counts={"fmt": fmt_failures, "len": len_failures},
    )


def score_lines(lines, config: RewardConfig) -> tuple[list[dict], list[RewardBreakdown]]:
    """Score an iterable of raw lines; errors become positional error objects."""
    replies: list[dict] = []
    breakdowns: list[RewardBreakdown] = []
    for lineno, raw in enumerate(lines, start=1):
        try:
            reply, breakdown = score_record(decode_line(raw), config)
        except RecordError as exc:
            replies.append({"line": lineno, "error": str(exc)})
            continue
        replies.append(reply)
        breakdowns.append(breakdown)
    return replies, breakdowns


def _service_reply(raw: bytes | str, config: RewardConfig) -> dict:
    record = None
    try:
        record = decode_line(raw)
        reply, _ = score_record(record, config)
        return reply
    except RecordError as exc:
        rid = record.get("id") if isinstance(record, dict) else None
        return {"id": rid if isinstance(rid, str) else None, "error": str(exc)}


def _encode_reply(reply: dict) -> bytes:
    return json.dumps(reply, ensure_ascii=False).encode("utf-8") + b"\n"


class _LineHandler(socketserver.StreamRequestHandler):
    def handle(self) -> None:
        for raw in self.rfile:
            self.wfile.write(_encode_reply(_service_reply(raw, self.server.reward_config)))
            self.wfile.flush()


class RewardService(socketserver.ThreadingTCPServer):
    """Newline-delimited JSON scoring over TCP.

    Each connection is served by its own thread; replies preserve that
    connection's request order.  Identical requests always produce
    identical replies because no state outlives a request.
    """

    allow_reuse_address = True
    daemon_threads = True

    def __init__(self, address: tuple[str, int], config: RewardConfig):
        super().__init__(address, _LineHandler)
        self.reward_config = config


def serve_stdio(config: RewardConfig, in_stream, out_stream) -> None:
    """Serve the same line protocol over a pair of byte streams."""
    for raw in in_stream:
        out_stream.write(_encode_reply(_service_reply(raw, config)))
        out_stream.flush()
