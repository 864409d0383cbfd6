"""The append-only session record: every prompt, reply, and adjudication.

A transcript is the session's complete audit trail — dense sequence numbers
from 1, one JSON object per event, a header line naming the session and
snapshotting its config. Saved files use the `.ramtn.log` extension. Replays
compare transcripts event-by-event; timestamps are recorded for humans but
never participate in equality.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping

TRANSCRIPT_SUFFIX = ".ramtn.log"
FORMAT_TAG = "ramtn-transcript/1"

PROMPT_SENT = "prompt-sent"
RAW_REPLY = "raw-reply"
PARSE_RESULT = "parse-result"
ADJUDICATION = "adjudication"
HUMAN_INPUT = "human-input"
RULING = "ruling"
TERMINATION = "termination"

EVENT_KINDS = frozenset(
    {PROMPT_SENT, RAW_REPLY, PARSE_RESULT, ADJUDICATION, HUMAN_INPUT, RULING, TERMINATION}
)

TERMINATION_REASONS = ("confidence-threshold", "iteration-limit", "budget", "user-abort")

# Confidence scalars are recomputed on replay; everything else must match
# bit-for-bit, floats included.
_FLOAT_TOLERANCE = 1e-12


class MalformedTranscript(Exception):
    """The transcript violates a structural invariant."""


@dataclass(frozen=True)
class TranscriptEvent:
    seq: int
    at: float
    kind: str
    payload: Mapping[str, object]


def _jsonify(value):
    """Coerce payloads to the JSON value space; reject anything else loudly."""
    if isinstance(value, (str, int, bool)) or value is None:
        return value
    if isinstance(value, float):
        return value
    if isinstance(value, (list, tuple)):
        return [_jsonify(item) for item in value]
    if isinstance(value, dict):
        return {str(k): _jsonify(v) for k, v in value.items()}
    raise TypeError(f"payload value {value!r} is not JSON-representable")


class SessionTranscript:
    """Ordered event log for one session, with live-append notification."""

    def __init__(
        self,
        session_id: str,
        config: Mapping[str, object],
        events: Iterable[TranscriptEvent] = (),
        on_append: Callable[[TranscriptEvent], None] | None = None,
    ):
        self.session_id = session_id
        self.config = dict(config)
        self.events: list[TranscriptEvent] = list(events)
        self.on_append = on_append

    def append(self, kind: str, payload: Mapping[str, object]) -> TranscriptEvent:
        if kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {kind!r}")
        event = TranscriptEvent(
            seq=len(self.events) + 1,
            at=time.monotonic(),
            kind=kind,
            payload=_jsonify(dict(payload)),
        )
        self.events.append(event)
        if self.on_append is not None:
            self.on_append(event)
        return event

    @property
    def last_seq(self) -> int:
        return len(self.events)

    @property
    def completed(self) -> bool:
        return bool(self.events) and self.events[-1].kind == TERMINATION

    # -- structural invariants ------------------------------------------------

    def validate(self, require_termination: bool = True) -> None:
        previous: TranscriptEvent | None = None
        for index, event in enumerate(self.events, start=1):
            if event.seq != index:
                raise MalformedTranscript(
                    f"sequence numbers must be dense from 1; found {event.seq} at position {index}"
                )
            if event.kind not in EVENT_KINDS:
                raise MalformedTranscript(f"unknown event kind {event.kind!r} at seq {event.seq}")
            if event.kind == RAW_REPLY:
                if previous is None or previous.kind != PROMPT_SENT:
                    raise MalformedTranscript(
                        f"raw-reply at seq {event.seq} does not follow a prompt-sent event"
                    )
                if previous.payload.get("step_key") != event.payload.get("step_key"):
                    raise MalformedTranscript(
                        f"raw-reply at seq {event.seq} answers a different step key"
                    )
            if event.kind == TERMINATION:
                if index != len(self.events):
                    raise MalformedTranscript(
                        f"termination event at seq {event.seq} is not the final event"
                    )
                reason = event.payload.get("reason")
                if reason not in TERMINATION_REASONS:
                    raise MalformedTranscript(f"unknown termination reason {reason!r}")
            previous = event
        if require_termination and not self.completed:
            raise MalformedTranscript("transcript has no termination event")

    # -- (de)serialization -----------------------------------------------------

    def to_lines(self) -> list[str]:
        header = {"format": FORMAT_TAG, "session": self.session_id, "config": self.config}
        lines = [json.dumps(header, ensure_ascii=False, sort_keys=True)]
        for event in self.events:
            lines.append(
                json.dumps(
                    {"seq": event.seq, "at": event.at, "kind": event.kind, "payload": event.payload},
                    ensure_ascii=False,
                    sort_keys=True,
                )
            )
        return lines

    def to_text(self) -> str:
        return "\n".join(self.to_lines()) + "\n"

    def save(self, path: str | Path) -> Path:
        path = Path(path)
        path.write_text(self.to_text(), encoding="utf-8")
        return path

    @classmethod
    def from_text(cls, text: str) -> "SessionTranscript":
        lines = [line for line in text.splitlines() if line.strip()]
        if not lines:
            raise MalformedTranscript("empty transcript")
        try:
            header = json.loads(lines[0])
        except ValueError as err:
            raise MalformedTranscript(f"unreadable header line: {err}")
        if not isinstance(header, dict) or header.get("format") != FORMAT_TAG:
            raise MalformedTranscript("first line is not a transcript header")
        session = header.get("session")
        config = header.get("config")
        if not isinstance(session, str) or not isinstance(config, dict):
            raise MalformedTranscript("header must carry a session id and a config snapshot")
        events = []
        for number, line in enumerate(lines[1:], start=2):
            try:
                record = json.loads(line)
                events.append(
                    TranscriptEvent(
                        seq=record["seq"],
                        at=float(record["at"]),
                        kind=record["kind"],
                        payload=record["payload"],
                    )
                )
            except (ValueError, KeyError, TypeError) as err:
                raise MalformedTranscript(f"unreadable event on line {number}: {err}")
        return cls(session_id=session, config=config, events=events)

    @classmethod
    def load(cls, path: str | Path) -> "SessionTranscript":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


# =============================================================================
# Comparison (replay support)
# =============================================================================


def _values_equal(a, b) -> bool:
    if isinstance(a, float) or isinstance(b, float):
        if not isinstance(a, (int, float)) or not isinstance(b, (int, float)):
            return False
        return math.isclose(a, b, rel_tol=0.0, abs_tol=_FLOAT_TOLERANCE)
    if isinstance(a, dict) and isinstance(b, dict):
        return a.keys() == b.keys() and all(_values_equal(a[k], b[k]) for k in a)
    if isinstance(a, list) and isinstance(b, list):
        return len(a) == len(b) and all(_values_equal(x, y) for x, y in zip(a, b))
    return a == b


def events_equal(a: TranscriptEvent, b: TranscriptEvent) -> bool:
    """Equality over (seq, kind, payload); timestamps deliberately ignored."""
    return a.seq == b.seq and a.kind == b.kind and _values_equal(dict(a.payload), dict(b.payload))


def first_divergence(recorded: SessionTranscript, recomputed: SessionTranscript) -> int | None:
    """Sequence number of the first event where the two transcripts disagree."""
    for old, new in zip(recorded.events, recomputed.events):
        if not events_equal(old, new):
            return old.seq
    if len(recorded.events) != len(recomputed.events):
        return min(len(recorded.events), len(recomputed.events)) + 1
    return None
