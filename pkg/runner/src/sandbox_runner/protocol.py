"""The stdin/stdout document protocol.

One request document in, one result document out. The result encoding is
canonical (sorted keys, default JSON separators, ASCII escapes, one trailing
newline) so that equal field values always produce equal bytes on the wire.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

STATUS_OK = "ok"
STATUS_TIMEOUT = "timeout"
STATUS_RUNTIME_ERROR = "runtime_error"
STATUS_MEMORY_EXCEEDED = "memory_exceeded"
STATUS_NO_OUTPUT = "no_output"

STATUSES = (
    STATUS_OK,
    STATUS_TIMEOUT,
    STATUS_RUNTIME_ERROR,
    STATUS_MEMORY_EXCEEDED,
    STATUS_NO_OUTPUT,
)


class ProtocolError(ValueError):
    """Malformed request or result document."""


@dataclass(frozen=True)
class RunRequest:
    program_source: str
    input_text: str
    time_limit_sec: float
    memory_limit_bytes: int


@dataclass(frozen=True)
class RunResult:
    status: str
    stdout_normalized: str | None
    stderr_excerpt: str
    wall_time_sec: float

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ProtocolError(f"unknown status {self.status!r}")
        if (self.stdout_normalized is not None) != (self.status == STATUS_OK):
            raise ProtocolError("stdout_normalized must be present exactly when status is ok")


def decode_request(raw: str) -> RunRequest:
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"request is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ProtocolError("request must be a JSON object")
    for field, kinds in (
        ("program_source", str),
        ("input_text", str),
        ("time_limit_sec", (int, float)),
        ("memory_limit_bytes", int),
    ):
        if field not in doc:
            raise ProtocolError(f"request missing field {field!r}")
        if isinstance(doc[field], bool) or not isinstance(doc[field], kinds):
            raise ProtocolError(f"request field {field!r} has wrong type")
    request = RunRequest(
        program_source=doc["program_source"],
        input_text=doc["input_text"],
        time_limit_sec=float(doc["time_limit_sec"]),
        memory_limit_bytes=doc["memory_limit_bytes"],
    )
    if not request.program_source.strip():
        raise ProtocolError("program_source is empty")
    if request.time_limit_sec <= 0:
        raise ProtocolError("time_limit_sec must be positive")
    if request.memory_limit_bytes <= 0:
        raise ProtocolError("memory_limit_bytes must be positive")
    return request


def encode_result(result: RunResult) -> str:
    doc = {
        "status": result.status,
        "stdout_normalized": result.stdout_normalized,
        "stderr_excerpt": result.stderr_excerpt,
        "wall_time_sec": result.wall_time_sec,
    }
    # Default separators and ASCII escaping: equal results must serialize to
    # equal bytes regardless of which runner implementation produced them.
    return json.dumps(doc, sort_keys=True) + "\n"


def decode_result(raw: str) -> RunResult:
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"result is not valid JSON: {exc}") from exc
    try:
        return RunResult(
            status=doc["status"],
            stdout_normalized=doc["stdout_normalized"],
            stderr_excerpt=doc["stderr_excerpt"],
            wall_time_sec=doc["wall_time_sec"],
        )
    except (KeyError, TypeError) as exc:
        raise ProtocolError(f"result document malformed: {exc}") from exc
