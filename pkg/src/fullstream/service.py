"""Session-oriented network interface: start sessions, stream text, change
the speaking rate mid-utterance, and subscribe to telemetry.

Wire format: JSON text messages, one per line/frame, over a persistent
bidirectional WebSocket.  Client messages: start / text / end_text /
set_rate / stop.  Telemetry: frame / sps / histogram / metrics / error /
done.  The protocol core is transport-agnostic and synchronous so it can be
fuzzed directly; the FastAPI layer adds the socket, pacing for wall-clock
sessions, and a bounded send queue that drops stale sps/histogram updates
(frames are never dropped).
"""

from __future__ import annotations

import asyncio
import itertools
import json
import threading
from collections import deque
from dataclasses import dataclass

from fastapi import FastAPI, WebSocket, WebSocketDisconnect

from . import __version__
from .backends import make_backend
from .engine import EngineConfig, Session
from .events import StreamEvent
from .rate import RateSchedule
from .sampling import GuidanceConfig, SamplerConfig

SPS_THROTTLE_S = 0.1  # at most 10 sps/histogram/metrics updates per session second
RATE_MIN, RATE_MAX = 1.0, 7.0
QUEUE_SOFT_LIMIT = 64  # pending sps/histogram messages per connection


@dataclass
class ServiceSettings:
    max_sessions: int = 8
    backend: str = "toy"
    seed: int = 0
    console_dir: str | None = None


def _error(code: str, text: str, fatal: bool = False) -> dict:
    return {"type": "error", "code": code, "text": text, "fatal": fatal}


_START_KEYS = {
    "tps", "la_min", "la_max", "src", "seed", "schedule", "clock",
    "gamma_temp", "gamma_depth", "cfg_text", "cfg_audio", "cfg_speaker", "sps",
}


class SessionProtocol:
    """One client conversation: validates message order and shape, owns the
    engine session, and maps engine events onto telemetry messages.  Never
    raises on client input; malformed input yields error messages."""

    def __init__(self, settings: ServiceSettings, default_seed: int = 0):
        self.settings = settings
        self.default_seed = default_seed
        self.session: Session | None = None
        self.closed = False
        self.is_wall = False
        self._probe: dict | None = None
        self._next_sps_t = 0.0
        self._target_sps: float | None = None
        self._ended = False

    # -- message entry points ---------------------------------------------------

    def handle_raw(self, raw, at: float | None = None) -> list[dict]:
        if isinstance(raw, (bytes, bytearray)):
            raw = raw.decode("utf-8", errors="replace")
        try:
            msg = json.loads(raw)
        except (json.JSONDecodeError, TypeError):
            return [_error("bad_json", "message is not valid JSON")]
        if not isinstance(msg, dict):
            return [_error("bad_message", "message must be a JSON object")]
        return self.handle(msg, at=at)

    def handle(self, msg: dict, at: float | None = None) -> list[dict]:
        try:
            return self._dispatch(msg, at)
        except Exception as exc:  # protocol guard: a client must never crash the server
            return [_error("internal", f"{type(exc).__name__}: {exc}")]

    def _dispatch(self, msg: dict, at: float | None) -> list[dict]:
        tag = msg.get("type")
        if self.closed:
            return [_error("closed", "session is closed")]
        if tag == "start":
            return self._on_start(msg)
        if self.session is None:
            return [_error("no_session", f"{tag!r} before start")]
        if tag == "text":
            return self._on_text(msg, at)
        if tag == "end_text":
            return self._on_end(at)
        if tag == "set_rate":
            return self._on_set_rate(msg)
        if tag == "stop":
            return self._on_stop()
        return [_error("unknown_type", f"unknown message type {tag!r}")]

    # -- handlers -----------------------------------------------------------------

    def _on_start(self, msg: dict) -> list[dict]:
        if self.session is not None:
            return [_error("already_started", "start may only be sent once")]
        cfg = msg.get("config", {})
        if not isinstance(cfg, dict):
            return [_error("bad_config", "config must be an object")]
        unknown = set(cfg) - _START_KEYS
        if unknown:
            return [_error("bad_config", f"unknown config keys: {sorted(unknown)}")]
        try:
            seed = int(cfg.get("seed", self.default_seed))
            src = bool(cfg.get("src", True))
            schedule = RateSchedule.parse(str(cfg.get("schedule", f"const:{cfg.get('sps', 4.0)}")))
            clock = str(cfg.get("clock", "wall"))
            config = EngineConfig(
                tps=None if cfg.get("tps") in (None, "inf") else float(cfg["tps"]),
                la_min=int(cfg.get("la_min", 3)),
                la_max=int(cfg.get("la_max", 25)),
                src_enabled=src,
                schedule=schedule,
                clock=clock,
                seed=seed,
                sampler=SamplerConfig(),
                guidance=GuidanceConfig(
                    gamma_temp=float(cfg.get("gamma_temp", 1.5)),
                    gamma_depth=float(cfg.get("gamma_depth", 3.0)),
                    text_cfg_enabled=bool(cfg.get("cfg_text", False)),
                    audio_cfg_enabled=bool(cfg.get("cfg_audio", False)),
                    speaker_cfg_enabled=bool(cfg.get("cfg_speaker", False)),
                ),
            )
            backend = make_backend(self.settings.backend, seed)
        except (ValueError, TypeError) as exc:
            return [_error("bad_config", str(exc))]
        self.is_wall = clock == "wall"
        self.session = Session(config, backend, state_probe=self._store_probe)
        self._target_sps = schedule.target_sps(0.0, 0) if src else None
        return [{"type": "metrics", "fpl_ms": None, "rtf_so_far": None}]

    def _on_text(self, msg: dict, at: float | None) -> list[dict]:
        token = msg.get("token")
        if not isinstance(token, str):
            return [_error("bad_text", "text message needs a string 'token'")]
        if self._ended:
            return [_error("text_after_end", "text after end_text")]
        try:
            self.session.feed_text(token, at=at)
        except ValueError as exc:
            return [_error("bad_text", str(exc))]
        return self._pump(at)

    def _on_end(self, at: float | None) -> list[dict]:
        if self._ended:
            return [_error("already_ended", "end_text already received")]
        self._ended = True
        self.session.end_text()
        return self._pump(at)

    def _on_set_rate(self, msg: dict) -> list[dict]:
        sps = msg.get("sps")
        if not isinstance(sps, (int, float)) or isinstance(sps, bool):
            return [_error("bad_rate", "set_rate needs a numeric 'sps'")]
        out = []
        clamped = min(max(float(sps), RATE_MIN), RATE_MAX)
        if clamped != sps:
            out.append(_error("rate_clamped", f"sps {sps} clamped to {clamped}"))
        try:
            self.session.set_rate(clamped)
            self._target_sps = clamped
        except ValueError as exc:
            return out + [_error("src_disabled", str(exc))]
        return out + self._pump(None)

    def _on_stop(self) -> list[dict]:
        self.closed = True
        totals = {
            "frames": self.session.frames_emitted,
            "stopped": True,
        }
        return [{"type": "done", "totals": totals}]

    # -- engine plumbing ---------------------------------------------------------

    def _store_probe(self, probe: dict) -> None:
        self._probe = probe

    def _pump(self, at: float | None) -> list[dict]:
        """Advance a simulated session inline; wall sessions advance on the
        driver's timer (tick)."""
        if self.session is None or self.session.done:
            return []
        if self.is_wall:
            horizon = at if at is not None else self.session.now
            events = self.session.pump(horizon=horizon)
        else:
            events = self.session.pump()
        return self.map_events(events)

    def tick(self, horizon: float) -> list[dict]:
        """Wall-clock driver entry: process everything due by session time `horizon`."""
        if self.session is None or self.session.done or self.closed:
            return []
        return self.map_events(self.session.pump(horizon=horizon))

    def next_wake(self) -> float | None:
        if self.session is None or self.session.done or self.closed:
            return None
        return self.session.next_wake_time()

    # -- event -> telemetry mapping -----------------------------------------------

    def map_events(self, events: list[StreamEvent]) -> list[dict]:
        out = []
        for ev in events:
            out.extend(self._map_event(ev))
        return out

    def _map_event(self, ev: StreamEvent) -> list[dict]:
        if ev.type == "frame_emitted":
            msgs = [frame_message(ev)]
            if ev.t + 1e-12 >= self._next_sps_t:
                self._next_sps_t = ev.t + SPS_THROTTLE_S
                msgs.extend(self._state_messages(ev.t))
            return msgs
        if ev.type == "rate_changed":
            # immediate reflection of a rate command, throttle window restarts
            self._target_sps = ev.sps
            self._next_sps_t = ev.t + SPS_THROTTLE_S
            return [self._sps_message(ev.t)]
        if ev.type == "warning":
            return [_error("warning", ev.text)]
        if ev.type == "done":
            return [{"type": "done", "totals": ev.totals}]
        # text_ingested / stall stay internal
        return []

    def _sps_message(self, t: float) -> dict:
        achieved = None
        if self._probe is not None:
            achieved = self._probe.get("achieved_sps")
        return {"type": "sps", "t": t, "target": self._target_sps, "achieved": achieved}

    def _state_messages(self, t: float) -> list[dict]:
        msgs = [self._sps_message(t)]
        if self._probe is not None and self._probe.get("p_target") is not None:
            msgs.append(
                {
                    "type": "histogram",
                    "p_acc": [round(x, 9) for x in self._probe["p_acc"].p.tolist()],
                    "p_target": [round(x, 9) for x in self._probe["p_target"].p.tolist()],
                }
            )
        s = self.session
        fpl = None
        if s.first_frame_t is not None and s.first_text_t is not None:
            fpl = (s.first_frame_t - s.first_text_t) * 1000.0
        rtf = None
        if s.frames_emitted:
            rtf = s.processing_ms / (s.frames_emitted / s.config.frame_rate * 1000.0)
        msgs.append({"type": "metrics", "fpl_ms": fpl, "rtf_so_far": rtf})
        return msgs


def frame_message(ev) -> dict:
    """Telemetry for one emitted frame; pure so log replay equals live telemetry."""
    return {
        "type": "frame",
        "index": ev.frame_index,
        "t": ev.t,
        "duration_token": ev.duration_token,
        "semantic": ev.semantic_token,
        "covered_phonemes": list(ev.covered_phonemes),
    }


def replay_telemetry(events: list[StreamEvent]) -> list[dict]:
    """Frame telemetry reconstructed from a serialized event log."""
    return [frame_message(ev) for ev in events if ev.type == "frame_emitted"]


class TelemetryQueue:
    """Ordered send queue; sps/histogram entries beyond the soft limit drop
    oldest-first, frames and terminal messages are never dropped."""

    DROPPABLE = ("sps", "histogram", "metrics")

    def __init__(self, soft_limit: int = QUEUE_SOFT_LIMIT):
        self.soft_limit = soft_limit
        self._items: deque[dict] = deque()
        self._droppable_count = 0

    def put(self, msg: dict) -> None:
        if msg["type"] in self.DROPPABLE:
            if self._droppable_count >= self.soft_limit:
                for i, item in enumerate(self._items):
                    if item["type"] in self.DROPPABLE:
                        del self._items[i]
                        self._droppable_count -= 1
                        break
            self._droppable_count += 1
        self._items.append(msg)

    def pop(self) -> dict | None:
        if not self._items:
            return None
        msg = self._items.popleft()
        if msg["type"] in self.DROPPABLE:
            self._droppable_count -= 1
        return msg

    def __len__(self) -> int:
        return len(self._items)


def create_app(settings: ServiceSettings | None = None) -> FastAPI:
    """FastAPI app exposing /health and the /session WebSocket."""
    settings = settings or ServiceSettings()
    app = FastAPI(title="fullstream control service", version=__version__)
    state = {"active": 0, "lock": threading.Lock(), "counter": itertools.count()}

    @app.get("/health")
    def health():
        return {"version": __version__, "active_sessions": state["active"]}

    @app.websocket("/session")
    async def session_ws(ws: WebSocket):
        await ws.accept()
        with state["lock"]:
            if state["active"] >= settings.max_sessions:
                await ws.send_text(json.dumps(_error(
                    "max_sessions", f"server is at its limit of {settings.max_sessions} sessions",
                    fatal=True)))
                await ws.close()
                return
            state["active"] += 1
            session_seed = settings.seed + next(state["counter"])
        proto = SessionProtocol(settings, default_seed=session_seed)
        queue = TelemetryQueue()
        kick = asyncio.Event()
        loop = asyncio.get_running_loop()
        origin: list[float] = []

        def session_now() -> float:
            return loop.time() - origin[0] if origin else 0.0

        async def flush():
            while len(queue):
                msg = queue.pop()
                await ws.send_text(json.dumps(msg))

        async def ticker():
            while not proto.closed:
                wake = proto.next_wake()
                if wake is None:
                    await kick.wait()
                    kick.clear()
                    continue
                delay = wake - session_now()
                if delay > 0:
                    try:
                        await asyncio.wait_for(kick.wait(), timeout=delay)
                        kick.clear()
                        continue
                    except asyncio.TimeoutError:
                        pass
                for msg in proto.tick(session_now()):
                    queue.put(msg)
                await flush()

        tick_task = None
        try:
            while True:
                raw = await ws.receive_text()
                at = None
                if proto.session is not None and proto.is_wall:
                    at = session_now()
                msgs = proto.handle_raw(raw, at=at)
                if proto.session is not None and not origin:
                    origin.append(loop.time())
                    if proto.is_wall:
                        tick_task = asyncio.create_task(ticker())
                for msg in msgs:
                    queue.put(msg)
                await flush()
                kick.set()
                if proto.closed:
                    break
        except WebSocketDisconnect:
            pass
        finally:
            proto.closed = True
            kick.set()
            if tick_task is not None:
                tick_task.cancel()
            with state["lock"]:
                state["active"] -= 1

    if settings.console_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/console", StaticFiles(directory=settings.console_dir, html=True), name="console")

    return app
