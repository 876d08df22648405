"""Trace event type and the two output renderers.

Both formats carry identical fields so a jsonl line re-parses to exactly
the tokens of its text twin:

    text   cycle=12 src=endpoint kind=beat detail=dummy
    jsonl  {"cycle": 12, "src": "endpoint", "kind": "beat", "detail": "dummy"}

Detail values are ints or strings only; addresses are pre-rendered as hex
strings when the event is created so both formats agree byte for byte.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

from .errors import InvalidConfig

TRACE_FORMATS = ("text", "jsonl")


@dataclass(frozen=True)
class TraceEvent:
    cycle: int
    source: str                      # endpoint | host | link
    kind: str                        # state-change | beat | msi | register-access | counter
    detail: dict[str, int | str] = field(default_factory=dict)

    def text_line(self) -> str:
        parts = [f"cycle={self.cycle}", f"src={self.source}", f"kind={self.kind}"]
        parts.extend(f"{k}={v}" for k, v in self.detail.items())
        return " ".join(parts)

    def json_line(self) -> str:
        record: dict[str, int | str] = {
            "cycle": self.cycle, "src": self.source, "kind": self.kind}
        record.update(self.detail)
        return json.dumps(record, separators=(", ", ": "))


def emit_trace(events: Iterable[TraceEvent], fmt: str = "text") -> bytes:
    """Render events to a byte stream in the requested format."""
    if fmt not in TRACE_FORMATS:
        raise InvalidConfig(f"trace format must be one of {TRACE_FORMATS}, got {fmt!r}")
    if fmt == "text":
        body = "".join(e.text_line() + "\n" for e in events)
    else:
        body = "".join(e.json_line() + "\n" for e in events)
    return body.encode("utf-8")
