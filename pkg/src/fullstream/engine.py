"""The full-stream orchestrator: text ingestion at a configurable token rate,
look-ahead gating, CFG-batched backend calls, rate-conditioned sampling,
alignment advance, and event emission.

Time model: every session runs on a session clock starting at 0.  Frame
starts are paced one frame period apart (output-rate pacing); a frame's
event timestamp is its start plus its compute cost.  On the simulated clock
costs come from the config's cost model and the timeline is fully virtual,
so runs are deterministic and instantaneous; on the wall clock a driver
aligns the session clock with real time and costs are measured.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import alignment as al
from .alignment import (
    AlignmentState,
    DurationToken,
    Phoneme,
    PhonemeStream,
    PromptSpec,
    duration_decode,
    mask_prompt,
)
from .backends import BackendRequest, ModelDims, SpeakerEmbedding, make_cfg_batch
from .events import (
    Done,
    EngineWarning,
    FrameEmitted,
    RateChanged,
    Stall,
    StreamEvent,
    TextIngested,
)
from .phonemize import builtin_g2p
from .rate import (
    AccumulatorWindow,
    RateSchedule,
    RateTargetTable,
    RollingSps,
    controller_step,
    default_rate_table,
)
from .sampling import (
    DurationDistribution,
    GuidanceConfig,
    JointLogits,
    SamplerConfig,
    cfg_combine,
    marginal_duration,
    matching_weights,
    apply_matching,
    sample_acoustic,
    sample_duration,
    sample_semantic_row,
)

STALL_REASON = "insufficient look-ahead"


class BackendFailure(RuntimeError):
    """A model backend raised during a frame step."""


@dataclass(frozen=True)
class CostModel:
    """Synthetic per-frame costs for the simulated clock, in milliseconds."""

    tt_ms: float = 3.0
    dt_ms: float = 2.0
    prefill_ms_per_frame: float = 0.0

    @property
    def frame_ms(self) -> float:
        return self.tt_ms + self.dt_ms


@dataclass
class EngineConfig:
    tps: float | None = None  # tokens/second of the input stream; None = unlimited
    la_min: int = 3
    la_max: int = 25
    frame_rate: float = 12.5
    src_enabled: bool = False
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    guidance: GuidanceConfig = field(default_factory=GuidanceConfig)
    schedule: RateSchedule = field(default_factory=lambda: RateSchedule.constant(4.0))
    clock: str = "simulated"
    prompt: PromptSpec | None = None
    cost_model: CostModel = field(default_factory=CostModel)
    seed: int = 0
    pace_output: bool = True
    rate_table: RateTargetTable | None = None
    speaker: SpeakerEmbedding | None = None
    dims: "ModelDims | None" = None  # when set, the backend must match

    def __post_init__(self):
        if self.la_min < 1:
            raise ValueError("la_min must be >= 1")
        if self.la_min > self.la_max:
            raise ValueError("la_min must not exceed la_max")
        if self.clock not in ("simulated", "wall"):
            raise ValueError("clock must be 'simulated' or 'wall'")
        if self.tps is not None and self.tps <= 0:
            raise ValueError("tps must be positive or None for unlimited")


class Session:
    """One synthesis session.  Exactly one caller drives the frame loop;
    feed_text / set_rate may be invoked from anywhere and take effect at
    frame boundaries."""

    def __init__(self, config: EngineConfig, backend, state_probe=None, g2p=builtin_g2p):
        self.config = config
        self.backend = backend
        self.dims = backend.dims
        if config.dims is not None and config.dims != backend.dims:
            raise ValueError(
                f"configured dims {config.dims} do not match backend dims {backend.dims}"
            )
        self.g2p = g2p
        self.state_probe = state_probe
        self.rng = np.random.default_rng(config.seed)
        self.now = 0.0
        self.next_slot = 0.0
        self.frame_period = 1.0 / config.frame_rate
        self.stream = PhonemeStream()
        self.align = AlignmentState()
        self.accumulator = AccumulatorWindow(smoothing_epsilon=1e-4)
        self.rolling_sps = RollingSps()
        self.rate_table = config.rate_table or default_rate_table(frame_rate=config.frame_rate)
        self.schedule = config.schedule
        self.speaker = config.speaker
        self.history: list[tuple] = []
        self.prompt_frames = 0
        self.masked_prompt_text: list[int] = []
        self.frames_emitted = 0
        self.processing_ms = 0.0
        self.stall_count = 0
        self.stall_total_ms = 0.0
        self.nuclei_total = 0
        self.tokens_ingested = 0
        self.first_text_t: float | None = None
        self.first_frame_t: float | None = None
        self.done = False
        self.all_events: list[StreamEvent] = []
        self._arrivals: list[tuple[float, str, list[Phoneme]]] = []
        self._arrival_idx = 0
        self._next_arrival = 0.0
        self._end_at: float | None = None
        self._ended_scheduled = False
        self._pending_rates: list[float] = []
        self._blocked_since: float | None = None
        self._was_clamped = False
        self._prefill_charged = False
        if config.prompt is not None:
            self.prompt_prefill(config.prompt)

    # -- input side -----------------------------------------------------------

    def feed_text(self, token: str, at: float | None = None) -> None:
        """Phonemize and schedule one text token's arrival."""
        self.feed_phonemes(self.g2p(token), label=token, at=at)

    def feed_phonemes(self, phonemes: list[Phoneme], label: str = "", at: float | None = None) -> None:
        if self._ended_scheduled:
            raise ValueError("cannot feed text after end_text")
        if at is None:
            arrival = max(self.now, self._next_arrival)
        else:
            if at < self._next_arrival - 1e-12:
                raise ValueError(f"arrival {at} precedes already-scheduled input")
            arrival = max(at, self.now)
        self._arrivals.append((arrival, label, list(phonemes)))
        spacing = 0.0 if self.config.tps is None else 1.0 / self.config.tps
        self._next_arrival = arrival + spacing

    def end_text(self) -> None:
        if self._ended_scheduled:
            raise ValueError("end_text called twice")
        self._ended_scheduled = True
        last = self._arrivals[-1][0] if self._arrivals else self.now
        self._end_at = max(self.now, last)

    def set_rate(self, sps: float) -> None:
        if not self.config.src_enabled:
            raise ValueError("set_rate requires rate control to be enabled")
        self._pending_rates.append(float(sps))

    def prompt_prefill(self, prompt: PromptSpec) -> None:
        if self.frames_emitted > 0 or self.history:
            raise ValueError("prompt prefill must happen before generation starts")
        self.masked_prompt_text = mask_prompt(prompt)
        assert len(self.masked_prompt_text) == prompt.frame_count
        self.history = [tuple(row) for row in prompt.audio_tokens]
        self.prompt_frames = prompt.frame_count

    # -- clock / scheduling -----------------------------------------------------

    def _ingest_until(self, t: float, events: list[StreamEvent]) -> None:
        while self._arrival_idx < len(self._arrivals) and self._arrivals[self._arrival_idx][0] <= t + 1e-12:
            at, label, phonemes = self._arrivals[self._arrival_idx]
            self._arrival_idx += 1
            self.stream.extend(phonemes)
            self.tokens_ingested += 1
            if self.first_text_t is None:
                self.first_text_t = at
            events.append(TextIngested(t=at, token=label, phonemes=len(phonemes)))
        if (
            self._end_at is not None
            and not self.stream.ended
            and self._end_at <= t + 1e-12
            and self._arrival_idx == len(self._arrivals)
        ):
            self.stream.end()

    def _next_wake(self) -> float | None:
        """Earliest session time at which the loop can make progress, or None
        when blocked on input that has not been scheduled yet."""
        if self.done:
            return None
        t_tick = max(self.now, self.next_slot)
        if self._gate_satisfiable_at(t_tick):
            return t_tick
        for i in range(self._arrival_idx, len(self._arrivals)):
            at = self._arrivals[i][0]
            if self._gate_satisfiable_at(max(at, t_tick)):
                return max(at, t_tick)
        if self._end_at is not None:
            return max(self._end_at, t_tick)
        return None

    def _gate_satisfiable_at(self, t: float) -> bool:
        """Gate check against the buffer state as of time t (without mutating)."""
        nonpunct = self.stream.nonpunct_count
        ended = self.stream.ended
        for i in range(self._arrival_idx, len(self._arrivals)):
            at, _, phonemes = self._arrivals[i]
            if at > t + 1e-12:
                break
            nonpunct += sum(not p.is_punctuation for p in phonemes)
        if self._end_at is not None and self._end_at <= t + 1e-12:
            ended = True
        remaining = nonpunct - self.align.cursor
        if ended:
            return remaining >= 0  # includes the fully-consumed case (done detection)
        return remaining >= self.config.la_min

    def next_wake_time(self) -> float | None:
        return self._next_wake()

    # -- frame loop -------------------------------------------------------------

    def pump(self, horizon: float | None = None) -> list[StreamEvent]:
        """Advance the session: process every tick due by `horizon` (session
        seconds), or as far as the known input timeline allows when None."""
        events: list[StreamEvent] = []
        while not self.done:
            slot = max(self.now, self.next_slot)
            wake = self._next_wake()
            if wake is None:
                # blocked on input that nobody has scheduled yet
                if self._blocked_since is None:
                    self._blocked_since = slot
                break
            if horizon is not None and wake > horizon + 1e-12:
                break
            self._ingest_until(wake, events)
            if self.stream.ended and self.align.cursor >= self.stream.nonpunct_count:
                self._finish(wake, events)
                break
            if not al.gate(self.stream, self.align, self.config.la_min):
                raise AssertionError("gate closed at a scheduled wake point")
            start = self._blocked_since if self._blocked_since is not None else slot
            self._blocked_since = None
            if wake > start + 1e-12 and self.frames_emitted > 0:
                # startup waiting is covered by first-packet latency, not stalls
                self.stall_count += 1
                self.stall_total_ms += (wake - start) * 1000.0
                events.append(Stall(t=wake, start=start, end=wake, reason=STALL_REASON))
            try:
                self._tick(wake, events)
            except BackendFailure as exc:
                events.append(EngineWarning(t=wake, text=f"session aborted: {exc}"))
                self._finish(wake, events, aborted=True)
                break
        self.all_events.extend(events)
        return events

    def run_to_done(self) -> list[StreamEvent]:
        """Drive the session to completion.  Simulated sessions finish in one
        pump; wall sessions sleep to their deadlines."""
        if self.config.clock == "simulated":
            events = self.pump()
            if not self.done:
                raise RuntimeError("session blocked on input; feed text or call end_text")
            return events
        origin = time.monotonic()
        events: list[StreamEvent] = []
        while not self.done:
            now_wall = time.monotonic() - origin
            events.extend(self.pump(horizon=now_wall))
            if self.done:
                break
            wake = self._next_wake()
            if wake is None:
                raise RuntimeError("session blocked on input; feed text or call end_text")
            delay = wake - (time.monotonic() - origin)
            if delay > 0:
                time.sleep(delay)
        return events

    def _charge(self, start_wall: float) -> float:
        """Per-frame compute cost in seconds (synthetic or measured)."""
        if self.config.clock == "simulated":
            cost_ms = self.config.cost_model.frame_ms
            if not self._prefill_charged:
                cost_ms += self.config.cost_model.prefill_ms_per_frame * self.prompt_frames
        else:
            cost_ms = (time.perf_counter() - start_wall) * 1000.0
        self._prefill_charged = True
        self.processing_ms += cost_ms
        return cost_ms / 1000.0

    def _tick(self, t_tick: float, events: list[StreamEvent]) -> None:
        cfg = self.config
        started = time.perf_counter()
        for sps in self._pending_rates:
            self.schedule = RateSchedule.constant(sps)
            events.append(RateChanged(t=t_tick, sps=sps))
        self._pending_rates.clear()

        window = al.visible_window(self.stream, self.align, cfg.la_max)
        request = BackendRequest(
            window=tuple(window),
            history=tuple(self.history),
            speaker=self.speaker,
            frame_index=len(self.history),
            cursor=self.align.cursor,
            prompt_frames=self.prompt_frames,
        )
        cond_req, uncond_req = make_cfg_batch(request, cfg.guidance)
        try:
            if cfg.guidance.temporal_enabled:
                tt_cond, tt_uncond = self.backend.tt_step_batch([cond_req, uncond_req])
            else:
                tt_cond = self.backend.tt_step(cond_req)
                tt_uncond = None
        except Exception as exc:
            raise BackendFailure(f"temporal step failed at frame {request.frame_index}: {exc}") from exc
        if tt_cond.joint_flat.size != self.dims.joint_width:
            raise ValueError(
                f"joint head width {tt_cond.joint_flat.size} != "
                f"{self.dims.n_semantic_vocab} x {self.dims.d_bins}"
            )
        joint_cond = JointLogits.from_flat(tt_cond.joint_flat, self.dims.d_bins)

        # duration state from the conditional branch only: guidance never
        # touches the duration distribution
        p_current = marginal_duration(joint_cond, cfg.sampler.temperature)
        p_target = p_acc = None
        target_sps = None
        if cfg.src_enabled:
            audio_t = self.frames_emitted / cfg.frame_rate
            ctrl = controller_step(
                self.rate_table, self.accumulator, self.schedule, audio_t, self.align.cursor
            )
            if ctrl.clamped and not self._was_clamped:
                events.append(
                    EngineWarning(
                        t=t_tick,
                        text=f"target {ctrl.target_sps:.2f} sps outside table range; clamped",
                    )
                )
            self._was_clamped = ctrl.clamped
            weights = matching_weights(ctrl.p_target, ctrl.p_acc, cfg.sampler.beta)
            p_updated = apply_matching(p_current, weights)
            p_target, p_acc, target_sps = ctrl.p_target, ctrl.p_acc, ctrl.target_sps
        else:
            p_updated = p_current

        mask = al.legal_duration_mask(self.align, self.stream)
        masked = p_updated.p * np.asarray(mask, dtype=np.float64)
        total = masked.sum()
        assert total > 0, "gate open but no legal duration token reachable"
        p_legal = DurationDistribution(masked / total)
        d = sample_duration(p_legal, cfg.sampler.top_p, self.rng)

        row = joint_cond.values[d]
        if tt_uncond is not None:
            joint_uncond = JointLogits.from_flat(tt_uncond.joint_flat, self.dims.d_bins)
            row = cfg_combine(row, joint_uncond.values[d], cfg.guidance.gamma_temp)
        semantic = sample_semantic_row(row, cfg.sampler.top_k, cfg.sampler.temperature, self.rng)

        try:
            dt_cond = self.backend.dt_step(tt_cond.embedding, semantic, self.speaker)
            depth_logits = dt_cond.codebook_logits
            if cfg.guidance.speaker_cfg_enabled:
                dt_uncond = self.backend.dt_step(
                    tt_cond.embedding, semantic, self.speaker, speaker_dropped=True
                )
                depth_logits = cfg_combine(
                    depth_logits, dt_uncond.codebook_logits, cfg.guidance.gamma_depth
                )
        except Exception as exc:
            raise BackendFailure(f"depth step failed at frame {request.frame_index}: {exc}") from exc
        acoustic = sample_acoustic(list(np.asarray(depth_logits)))

        token = DurationToken(*duration_decode(d))
        covered_preview = list(range(self.align.cursor, self.align.cursor + token.ppf))
        nuclei = al.first_coverage_nuclei(self.align, self.stream, covered_preview)
        covered = al.advance(self.align, token, self.stream)
        self.nuclei_total += nuclei

        gen_index = self.frames_emitted
        audio_t = gen_index / cfg.frame_rate
        self.accumulator.push(d, audio_t)
        self.rolling_sps.push(audio_t, nuclei)
        self.history.append((semantic, *acoustic))
        self.frames_emitted += 1

        cost_s = self._charge(started)
        self.now = t_tick + cost_s
        self.next_slot = t_tick + (max(self.frame_period, cost_s) if cfg.pace_output else cost_s)
        if self.first_frame_t is None:
            self.first_frame_t = self.now
        # text that landed while this frame was computing must appear before
        # the frame event to keep event times non-decreasing
        self._ingest_until(self.now, events)
        events.append(
            FrameEmitted(
                frame_index=gen_index,
                t=self.now,
                duration_token=d,
                semantic_token=semantic,
                acoustic_tokens=tuple(acoustic),
                covered_phonemes=tuple(covered),
                nuclei=nuclei,
            )
        )
        if self.state_probe is not None:
            self.state_probe(
                {
                    "frame_index": gen_index,
                    "t": self.now,
                    "audio_t": audio_t,
                    "p_current": p_current,
                    "p_updated": p_updated,
                    "p_target": p_target,
                    "p_acc": p_acc,
                    "target_sps": target_sps,
                    "achieved_sps": self.rolling_sps.value(audio_t + 1.0 / cfg.frame_rate),
                    "duration_token": d,
                }
            )
        if self.stream.ended and self.align.cursor >= self.stream.nonpunct_count:
            self._finish(self.now, events)

    def _finish(self, t: float, events: list[StreamEvent], aborted: bool = False) -> None:
        self.done = True
        fpl_ms = None
        if self.first_frame_t is not None and self.first_text_t is not None:
            fpl_ms = (self.first_frame_t - self.first_text_t) * 1000.0
        audio_s = self.frames_emitted / self.config.frame_rate
        events.append(
            Done(
                t=max(t, self.now),
                totals={
                    "aborted": aborted,
                    "frames": self.frames_emitted,
                    "audio_seconds": audio_s,
                    "processing_ms": self.processing_ms,
                    "stall_count": self.stall_count,
                    "stall_total_ms": self.stall_total_ms,
                    "coverage_gap_events": len(self.align.coverage_gaps),
                    "coverage_gap_phonemes": sum(len(g[1]) for g in self.align.coverage_gaps),
                    "nuclei": self.nuclei_total,
                    "phonemes_consumed": self.align.cursor,
                    "tokens_ingested": self.tokens_ingested,
                    "fpl_ms": fpl_ms,
                },
            )
        )


def run(config: EngineConfig, backend, tokens: list[str] | None = None,
        phonemes: list[Phoneme] | None = None, state_probe=None, g2p=builtin_g2p) -> list[StreamEvent]:
    """Batch entry point: feed the whole input (tokens at the configured
    rate, or pre-phonemized input one phoneme per token), then run to Done."""
    session = Session(config, backend, state_probe=state_probe, g2p=g2p)
    if tokens is not None:
        for tok in tokens:
            session.feed_text(tok)
    if phonemes is not None:
        for p in phonemes:
            session.feed_phonemes([p], label=f"p:{p.symbol}")
    session.end_text()
    return session.run_to_done()
