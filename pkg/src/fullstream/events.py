"""Timestamped engine output events and their line-delimited serialization.

One event per line, stable field names; the bench harness, service, and
console all consume this stream.  Event `t` values are non-decreasing within
a session (a stall is stamped at the moment it resolves).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field


@dataclass(frozen=True)
class FrameEmitted:
    frame_index: int
    t: float  # session-clock time the frame finished computing, seconds
    duration_token: int
    semantic_token: int
    acoustic_tokens: tuple
    covered_phonemes: tuple
    nuclei: int
    type: str = field(default="frame_emitted", init=False)

    @property
    def audio_time(self) -> float:
        """Start of this frame on the generated-speech timeline."""
        return self.frame_index * 0.08


@dataclass(frozen=True)
class Stall:
    t: float  # when generation resumed
    start: float
    end: float
    reason: str
    type: str = field(default="stall", init=False)


@dataclass(frozen=True)
class RateChanged:
    t: float
    sps: float
    type: str = field(default="rate_changed", init=False)


@dataclass(frozen=True)
class TextIngested:
    t: float
    token: str
    phonemes: int
    type: str = field(default="text_ingested", init=False)


@dataclass(frozen=True)
class EngineWarning:
    t: float
    text: str
    type: str = field(default="warning", init=False)


@dataclass(frozen=True)
class Done:
    t: float
    totals: dict
    type: str = field(default="done", init=False)


StreamEvent = FrameEmitted | Stall | RateChanged | TextIngested | EngineWarning | Done

_EVENT_TYPES = {
    "frame_emitted": FrameEmitted,
    "stall": Stall,
    "rate_changed": RateChanged,
    "text_ingested": TextIngested,
    "warning": EngineWarning,
    "done": Done,
}


def event_to_json(event: StreamEvent) -> str:
    doc = asdict(event)
    for key in ("acoustic_tokens", "covered_phonemes"):
        if key in doc:
            doc[key] = list(doc[key])
    return json.dumps(doc, sort_keys=True)


def event_from_json(line: str) -> StreamEvent:
    doc = json.loads(line)
    cls = _EVENT_TYPES.get(doc.pop("type", None))
    if cls is None:
        raise ValueError(f"unknown event type in {line!r}")
    for key in ("acoustic_tokens", "covered_phonemes"):
        if key in doc:
            doc[key] = tuple(doc[key])
    return cls(**doc)


def write_events(events, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ev in events:
            fh.write(event_to_json(ev) + "\n")


def read_events(path) -> list[StreamEvent]:
    events = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                events.append(event_from_json(line))
    return events
