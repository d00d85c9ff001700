"""Latency/throughput measurement and experiment harness: first-packet
latency, real-time factor, token-rate x look-ahead sweeps, chunk-size runs,
and rate-following evaluation.

All measurements are pure functions of the event stream, so recomputing them
from a serialized event log gives exactly the live numbers.  Intelligibility
metrics need trained models and external ASR; reports carry structural
integrity counters (stalls, coverage gaps) instead, and say so in their
metadata.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .alignment import Phoneme, duration_decode
from .backends import make_backend
from .engine import CostModel, EngineConfig, Session
from .events import Done, FrameEmitted, StreamEvent
from .rate import RateSchedule, SpsCurve, estimate_sps, pearson
from .sampling import GuidanceConfig, SamplerConfig

REPORT_COLUMNS = [
    "tps", "la_min", "fpl_ms", "rtf", "stall_count", "stall_total_ms", "corr", "frames", "seed",
]


def measure_fpl(events: list[StreamEvent]) -> float | None:
    """Milliseconds from the first ingested text to the first emitted frame;
    None (not zero) when no frame was ever produced."""
    first_text = next((e for e in events if e.type == "text_ingested"), None)
    if first_text is None:
        raise ValueError("event stream has no text_ingested event")
    first_frame = next((e for e in events if e.type == "frame_emitted"), None)
    if first_frame is None:
        return None
    return (first_frame.t - first_text.t) * 1000.0


def measure_rtf(events: list[StreamEvent]) -> float:
    """Processing time divided by generated audio duration (lower is better)."""
    done = next((e for e in events if e.type == "done"), None)
    if done is None:
        raise ValueError("event stream has no done event")
    audio_s = done.totals["audio_seconds"]
    if done.totals["frames"] == 0 or audio_s <= 0:
        raise ValueError("no audio generated; real-time factor undefined")
    return done.totals["processing_ms"] / (audio_s * 1000.0)


def stall_stats(events: list[StreamEvent]) -> tuple[int, float]:
    stalls = [e for e in events if e.type == "stall"]
    return len(stalls), sum((e.end - e.start) * 1000.0 for e in stalls)


def synthetic_phonemes(count: int, symbol_cycle: int = 20) -> list[Phoneme]:
    """Deterministic test stream: 2 syllable nuclei per 5 phonemes, matching
    the 2.5 phonemes-per-syllable assumption of the default rate table."""
    return [
        Phoneme(symbol=1 + (i % symbol_cycle), is_syllable_nucleus=(i % 5) in (0, 2))
        for i in range(count)
    ]


def make_bench_backend(kind: str, seed: int):
    return make_backend(kind, seed)


@dataclass
class BenchRow:
    tps: float | None
    la_min: int
    fpl_ms: float | None
    rtf: float | None
    stall_count: int
    stall_total_ms: float
    corr: float | None
    frames: int
    seed: int
    error: str | None = None

    def as_record(self) -> dict:
        def fmt(v):
            if v is None:
                return ""
            return v

        return {
            "tps": "inf" if self.tps is None else self.tps,
            "la_min": self.la_min,
            "fpl_ms": fmt(self.fpl_ms),
            "rtf": fmt(self.rtf),
            "stall_count": self.stall_count,
            "stall_total_ms": self.stall_total_ms,
            "corr": fmt(self.corr),
            "frames": self.frames,
            "seed": self.seed,
        }


@dataclass
class BenchReport:
    rows: list[BenchRow]
    metadata: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=REPORT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in self.rows:
            writer.writerow(row.as_record())
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv())


@dataclass
class SweepSpec:
    tps_values: list[float | None]
    la_values: list[int]
    repetitions: int = 1
    schedule: RateSchedule | None = None
    backend: str = "scripted"
    clock: str = "simulated"
    seed: int = 0
    phoneme_count: int = 120
    cost_model: CostModel = field(default_factory=CostModel)

    def __post_init__(self):
        if not self.tps_values or not self.la_values or self.repetitions < 1:
            raise ValueError("sweep grid must be non-empty")


def _cell_seed(base_seed: int, index: int) -> int:
    return int(np.random.SeedSequence([base_seed, index]).generate_state(1)[0])


def _cell_config(spec: SweepSpec, tps, la, seed) -> EngineConfig:
    src = spec.schedule is not None
    return EngineConfig(
        tps=tps,
        la_min=la,
        src_enabled=src,
        schedule=spec.schedule if src else RateSchedule.constant(4.0),
        clock=spec.clock,
        cost_model=spec.cost_model,
        seed=seed,
        guidance=GuidanceConfig(text_cfg_enabled=False, audio_cfg_enabled=False,
                                speaker_cfg_enabled=False),
        pace_output=True,
    )


def run_cell(spec: SweepSpec, tps, la, seed) -> list[StreamEvent]:
    config = _cell_config(spec, tps, la, seed)
    backend = make_bench_backend(spec.backend, seed)
    session = Session(config, backend)
    for p in synthetic_phonemes(spec.phoneme_count):
        session.feed_phonemes([p], label=f"p:{p.symbol}")
    session.end_text()
    return session.run_to_done()


def sweep(spec: SweepSpec) -> BenchReport:
    """One fresh session per (tps, la, repetition) grid cell; failures become
    error rows and the sweep continues."""
    rows = []
    errors = []
    index = 0
    for tps in spec.tps_values:
        for la in spec.la_values:
            for _ in range(spec.repetitions):
                seed = _cell_seed(spec.seed, index)
                index += 1
                try:
                    events = run_cell(spec, tps, la, seed)
                    count, total_ms = stall_stats(events)
                    corr = None
                    if spec.schedule is not None:
                        corr = rate_eval(events, spec.schedule).corr
                    done = next(e for e in events if e.type == "done")
                    rows.append(
                        BenchRow(
                            tps=tps, la_min=la,
                            fpl_ms=measure_fpl(events), rtf=measure_rtf(events),
                            stall_count=count, stall_total_ms=total_ms,
                            corr=corr, frames=done.totals["frames"], seed=seed,
                        )
                    )
                except Exception as exc:  # record and continue
                    rows.append(
                        BenchRow(tps=tps, la_min=la, fpl_ms=None, rtf=None,
                                 stall_count=0, stall_total_ms=0.0, corr=None,
                                 frames=0, seed=seed, error=str(exc))
                    )
                    errors.append({"tps": tps, "la_min": la, "seed": seed, "error": str(exc)})
    meta = {
        "backend": spec.backend,
        "clock": spec.clock,
        "intelligibility": "not measured (needs trained weights + ASR); "
                           "stall and coverage-gap counters substitute",
        "errors": errors,
    }
    return BenchReport(rows=rows, metadata=meta)


@dataclass
class RateEvalResult:
    corr: float | None
    target: SpsCurve
    achieved: SpsCurve

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["time_s", "target_sps", "achieved_sps"])
        target_on_grid = self.target.value_at(self.achieved.times)
        for t, tgt, ach in zip(self.achieved.times, target_on_grid, self.achieved.sps):
            writer.writerow([f"{t:.6f}", f"{tgt:.6f}", f"{ach:.6f}"])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv())


def rate_eval(events: list[StreamEvent], schedule: RateSchedule) -> RateEvalResult:
    """Target-vs-achieved comparison: achieved speaking rate from nuclei-
    annotated frames, target resolved from the schedule on the same grid."""
    frames = [e for e in events if e.type == "frame_emitted"]
    if not frames:
        raise ValueError("no frames to evaluate")
    achieved = estimate_sps([(f.audio_time, f.nuclei) for f in frames])
    cursor = 0
    targets = []
    for f in frames:
        targets.append(schedule.target_sps(f.audio_time, cursor))
        shift, _ = duration_decode(f.duration_token)
        cursor += shift
    target = SpsCurve(achieved.times, np.asarray(targets))
    try:
        corr = pearson(target, achieved)
    except ValueError:
        corr = None
    return RateEvalResult(corr=corr, target=target, achieved=achieved)


def run_rate_scenario(
    schedule: RateSchedule,
    seed: int = 0,
    backend: str = "scripted",
    phoneme_count: int | None = None,
    beta: float = 5.0,
    state_probe=None,
) -> list[StreamEvent]:
    """Standard rate-following scenario: full text up front, rate control on,
    guidance off, scripted stationary backend unless told otherwise."""
    if phoneme_count is None:
        phoneme_count = phoneme_budget(schedule)
    config = EngineConfig(
        tps=None,
        src_enabled=True,
        schedule=schedule,
        seed=seed,
        sampler=SamplerConfig(beta=beta),
        guidance=GuidanceConfig(text_cfg_enabled=False, audio_cfg_enabled=False,
                                speaker_cfg_enabled=False),
    )
    session = Session(config, make_bench_backend(backend, seed), state_probe=state_probe)
    for p in synthetic_phonemes(phoneme_count):
        session.feed_phonemes([p], label=f"p:{p.symbol}")
    session.end_text()
    return session.run_to_done()


def phoneme_budget(schedule: RateSchedule, phonemes_per_syllable: float = 2.5) -> int:
    """Phonemes needed for the schedule to play out over its natural span."""
    if schedule.kind == "constant":
        return int(phonemes_per_syllable * schedule.params[0] * 20.0)
    if schedule.kind == "ramp":
        start, end, duration = schedule.params
        return int(phonemes_per_syllable * (start + end) / 2.0 * duration)
    _, _, period = schedule.params
    return int(period * 4 + period // 2)


@dataclass
class ChunkRow:
    chunk_words: int
    fpl_ms: float | None
    stall_count: int
    stall_total_ms: float
    coverage_gap_events: int
    frames: int
    seed: int


def chunk_size_run(
    words: list[str],
    chunk_words: int,
    tps: float = 10.0,
    seed: int = 0,
    backend: str = "scripted",
    g2p=None,
) -> ChunkRow:
    """Deliver the corpus in chunks of the given word count: a chunk of k
    words arrives as one unit when its first word would have arrived at the
    token rate, so bigger chunks satisfy the look-ahead gate sooner."""
    if chunk_words < 1:
        raise ValueError("chunk_words must be >= 1")
    from .phonemize import builtin_g2p

    g2p = g2p or builtin_g2p
    config = EngineConfig(
        tps=tps, seed=seed,
        guidance=GuidanceConfig(text_cfg_enabled=False, audio_cfg_enabled=False,
                                speaker_cfg_enabled=False),
    )
    session = Session(config, make_bench_backend(backend, seed))
    for start in range(0, len(words), chunk_words):
        chunk = words[start : start + chunk_words]
        phonemes = [p for w in chunk for p in g2p(w)]
        arrival = start / tps if tps else 0.0
        session.feed_phonemes(phonemes, label=" ".join(chunk), at=arrival)
    session.end_text()
    events = session.run_to_done()
    count, total_ms = stall_stats(events)
    done = next(e for e in events if e.type == "done")
    return ChunkRow(
        chunk_words=chunk_words,
        fpl_ms=measure_fpl(events),
        stall_count=count,
        stall_total_ms=total_ms,
        coverage_gap_events=done.totals["coverage_gap_events"],
        frames=done.totals["frames"],
        seed=seed,
    )


def chunk_report_csv(rows: list[ChunkRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["chunk_words", "fpl_ms", "stall_count", "stall_total_ms",
                     "coverage_gap_events", "frames", "seed"])
    for r in rows:
        writer.writerow([r.chunk_words, "" if r.fpl_ms is None else r.fpl_ms,
                         r.stall_count, r.stall_total_ms, r.coverage_gap_events,
                         r.frames, r.seed])
    return buf.getvalue()
