"""Speaking-rate control machinery: target duration-state lookup, sliding
accumulation of generated duration tokens, SPS curve estimation, schedules,
and rate-following statistics.
"""

from __future__ import annotations

import json
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field

import numpy as np

from .alignment import N_DURATION_TOKENS, duration_encode
from .sampling import DurationDistribution, smooth, uniform

DEFAULT_EPSILON = 1e-4
DEFAULT_WINDOW_SECONDS = 3.0
SPS_WINDOW_SECONDS = 3.0
SPS_WINDOW_OVERLAP = 0.25  # windows hop by (1 - overlap) * window
PHONEMES_PER_SYLLABLE = 2.5
FRAME_RATE = 12.5


class RateTargetTable:
    """sps -> duration-state histogram lookup.

    Anchors hold raw normalized histograms; epsilon smoothing is applied at
    query time so every returned histogram is strictly positive.
    """

    def __init__(self, anchors: list[tuple[float, np.ndarray]], smoothing_epsilon: float = DEFAULT_EPSILON):
        if not anchors:
            raise ValueError("rate table needs at least one anchor")
        sps = [a[0] for a in anchors]
        if any(b <= a for a, b in zip(sps, sps[1:])):
            raise ValueError("anchor sps values must be strictly increasing")
        self.anchors = [(float(s), np.asarray(h, dtype=np.float64)) for s, h in anchors]
        for s, h in self.anchors:
            if h.size != N_DURATION_TOKENS or np.any(h < 0):
                raise ValueError(f"bad histogram at anchor sps={s}")
        self.smoothing_epsilon = smoothing_epsilon

    @property
    def sps_range(self) -> tuple[float, float]:
        return self.anchors[0][0], self.anchors[-1][0]

    def in_range(self, sps: float) -> bool:
        lo, hi = self.sps_range
        return lo <= sps <= hi

    def target_distribution(self, sps: float) -> DurationDistribution:
        """Linear interpolation between bracketing anchors, then smoothing.

        Queries outside the anchor range clamp to the endpoints; callers that
        care should check in_range() and surface a warning.
        """
        keys = [a[0] for a in self.anchors]
        sps = min(max(sps, keys[0]), keys[-1])
        hi = bisect_left(keys, sps)
        if hi < len(keys) and keys[hi] == sps:
            raw = self.anchors[hi][1]
        else:
            lo = hi - 1
            s0, h0 = self.anchors[lo]
            s1, h1 = self.anchors[hi]
            t = (sps - s0) / (s1 - s0)
            raw = (1 - t) * h0 + t * h1
        raw = raw / raw.sum()
        return DurationDistribution(smooth(raw, self.smoothing_epsilon))

    def to_json(self) -> str:
        doc = {
            "smoothing_epsilon": self.smoothing_epsilon,
            "anchors": [{"sps": s, "p": h.tolist()} for s, h in self.anchors],
        }
        return json.dumps(doc, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "RateTargetTable":
        doc = json.loads(text)
        anchors = [(a["sps"], np.asarray(a["p"], dtype=np.float64)) for a in doc["anchors"]]
        return cls(anchors, smoothing_epsilon=doc.get("smoothing_epsilon", DEFAULT_EPSILON))


def shift_histogram(mean_shift: float, ppf2_share: float = 0.3) -> np.ndarray:
    """Histogram over the 6 duration tokens with the given expected cursor shift.

    Mass moves from shift-0 to shift-1 to shift-2 as the mean rises.  Shift-1
    mass is split between 1- and 2-phoneme coverage; shift-0 stays on single
    coverage (elongation) and shift-2 pairs with 2-phoneme coverage so fast
    speech does not skip phonemes.
    """
    m = min(max(mean_shift, 0.0), 2.0)
    if m <= 1.0:
        p_shift = (1.0 - m, m, 0.0)
    else:
        p_shift = (0.0, 2.0 - m, m - 1.0)
    h = np.zeros(N_DURATION_TOKENS)
    h[duration_encode(0, 1)] = p_shift[0]
    h[duration_encode(1, 1)] = p_shift[1] * (1 - ppf2_share)
    h[duration_encode(1, 2)] = p_shift[1] * ppf2_share
    h[duration_encode(2, 2)] = p_shift[2]
    return h


def default_rate_table(
    phonemes_per_syllable: float = PHONEMES_PER_SYLLABLE,
    frame_rate: float = FRAME_RATE,
    smoothing_epsilon: float = DEFAULT_EPSILON,
) -> RateTargetTable:
    """Synthetic parametric table: for a target of s syllables/second the
    expected phoneme rate is s * phonemes_per_syllable, so the state machine
    must advance mean_shift = phoneme_rate / frame_rate phonemes per frame."""
    anchors = []
    for sps in (0.5, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 10.0):
        mean_shift = sps * phonemes_per_syllable / frame_rate
        anchors.append((sps, shift_histogram(mean_shift)))
    return RateTargetTable(anchors, smoothing_epsilon=smoothing_epsilon)


def build_table_from_records(
    lines, sps_bin_width: float = 0.5, smoothing_epsilon: float = DEFAULT_EPSILON
) -> RateTargetTable:
    """Aggregate alignment records into anchors.

    Record format, one utterance per line:
    `utterance_id, sps, count_bin0..count_bin5`.  Utterances are pooled into
    sps bins of the given width (anchor at the bin center).
    """
    bins: dict[int, np.ndarray] = {}
    for raw in lines:
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2 + N_DURATION_TOKENS:
            raise ValueError(f"expected 8 fields in record {line!r}")
        sps = float(parts[1])
        counts = np.asarray([float(c) for c in parts[2:]], dtype=np.float64)
        if np.any(counts < 0):
            raise ValueError(f"negative counts in record {line!r}")
        key = int(round(sps / sps_bin_width))
        bins.setdefault(key, np.zeros(N_DURATION_TOKENS))
        bins[key] += counts
    if not bins:
        raise ValueError("no records to build a table from")
    anchors = []
    for key in sorted(bins):
        total = bins[key].sum()
        if total == 0:
            continue
        anchors.append((key * sps_bin_width, bins[key] / total))
    return RateTargetTable(anchors, smoothing_epsilon=smoothing_epsilon)


class AccumulatorWindow:
    """Sliding window of generated duration tokens over speech time.

    Entries older than window_seconds before the latest read time are
    evicted; the boundary entry (exactly window_seconds old) is kept.
    An empty window reads as the uniform distribution.
    """

    def __init__(
        self,
        window_seconds: float = DEFAULT_WINDOW_SECONDS,
        smoothing_epsilon: float = DEFAULT_EPSILON,
        d_bins: int = N_DURATION_TOKENS,
    ):
        self.window_seconds = window_seconds
        self.smoothing_epsilon = smoothing_epsilon
        self.d_bins = d_bins
        self.entries: list[tuple[float, int]] = []
        self._counts = np.zeros(d_bins)
        self._start = 0  # eviction front within entries

    def _evict(self, now: float) -> None:
        cutoff = now - self.window_seconds
        while self._start < len(self.entries) and self.entries[self._start][0] < cutoff:
            self._counts[self.entries[self._start][1]] -= 1
            self._start += 1
        if self._start > 256 and self._start * 2 > len(self.entries):
            self.entries = self.entries[self._start :]
            self._start = 0

    def push(self, token_id: int, t: float) -> None:
        if not (0 <= token_id < self.d_bins):
            raise ValueError(f"duration token id {token_id} out of range")
        if self.entries and t < self.entries[-1][0]:
            raise ValueError(f"out-of-order timestamp {t} after {self.entries[-1][0]}")
        self.entries.append((t, token_id))
        self._counts[token_id] += 1

    def distribution(self, now: float) -> DurationDistribution:
        self._evict(now)
        total = self._counts.sum()
        if total == 0:
            return uniform(self.d_bins)
        return DurationDistribution(smooth(self._counts / total, self.smoothing_epsilon))

    def accumulate(self, token_id: int, t: float) -> DurationDistribution:
        """Push then read, the per-frame engine pattern."""
        self.push(token_id, t)
        return self.distribution(t)


@dataclass(frozen=True)
class RateSchedule:
    """Target speaking-rate trajectory.

    kinds: "constant" (sps), "ramp" (start, end, duration seconds, indexed by
    time) and "alternating" (low, high, period in phonemes, indexed by the
    alignment cursor).
    """

    kind: str
    params: tuple

    SPS_MIN = 0.5
    SPS_MAX = 10.0

    def __post_init__(self):
        if self.kind not in ("constant", "ramp", "alternating"):
            raise ValueError(f"unknown schedule kind {self.kind!r}")
        for v in self._sps_values():
            if not (self.SPS_MIN <= v <= self.SPS_MAX):
                raise ValueError(f"sps {v} outside [{self.SPS_MIN}, {self.SPS_MAX}]")
        if self.kind == "alternating" and self.params[2] < 1:
            raise ValueError("alternation period must be >= 1 phoneme")
        if self.kind == "ramp" and self.params[2] <= 0:
            raise ValueError("ramp duration must be positive")

    def _sps_values(self):
        if self.kind == "constant":
            return (self.params[0],)
        return (self.params[0], self.params[1])

    @classmethod
    def constant(cls, sps: float) -> "RateSchedule":
        return cls("constant", (float(sps),))

    @classmethod
    def ramp(cls, start: float, end: float, duration: float) -> "RateSchedule":
        return cls("ramp", (float(start), float(end), float(duration)))

    @classmethod
    def alternating(cls, low: float, high: float, period_phonemes: int = 40) -> "RateSchedule":
        return cls("alternating", (float(low), float(high), int(period_phonemes)))

    def target_sps(self, t: float, phoneme_cursor: int) -> float:
        if self.kind == "constant":
            return self.params[0]
        if self.kind == "ramp":
            start, end, duration = self.params
            frac = min(max(t / duration, 0.0), 1.0)
            return start + (end - start) * frac
        low, high, period = self.params
        return low if (phoneme_cursor // period) % 2 == 0 else high

    @classmethod
    def parse(cls, text: str) -> "RateSchedule":
        """Parse `const:S`, `ramp:A:B[:DUR]`, `alt:LOW:HIGH[:PERIOD]`."""
        parts = text.split(":")
        kind = parts[0].lower()
        try:
            if kind in ("const", "constant"):
                return cls.constant(float(parts[1]))
            if kind == "ramp":
                dur = float(parts[3]) if len(parts) > 3 else 20.0
                return cls.ramp(float(parts[1]), float(parts[2]), dur)
            if kind in ("alt", "alternating"):
                period = int(parts[3]) if len(parts) > 3 else 40
                return cls.alternating(float(parts[1]), float(parts[2]), period)
        except (IndexError, ValueError) as exc:
            raise ValueError(f"bad schedule spec {text!r}: {exc}") from None
        raise ValueError(f"unknown schedule kind in {text!r}")

    def describe(self) -> str:
        return f"{self.kind}:" + ":".join(str(p) for p in self.params)


@dataclass
class ControllerOutput:
    p_target: DurationDistribution
    p_acc: DurationDistribution
    target_sps: float
    clamped: bool


def controller_step(
    table: RateTargetTable,
    window: AccumulatorWindow,
    schedule: RateSchedule,
    t: float,
    phoneme_cursor: int,
) -> ControllerOutput:
    """Resolve the schedule to a target histogram and read the accumulator."""
    sps = schedule.target_sps(t, phoneme_cursor)
    clamped = not table.in_range(sps)
    return ControllerOutput(
        p_target=table.target_distribution(sps),
        p_acc=window.distribution(t),
        target_sps=sps,
        clamped=clamped,
    )


@dataclass
class SpsCurve:
    """Measured (or target) syllables-per-second series on a time axis."""

    times: np.ndarray
    sps: np.ndarray
    single_window_fallback: bool = False

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.sps = np.asarray(self.sps, dtype=np.float64)
        if self.times.size != self.sps.size:
            raise ValueError("times and sps lengths differ")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("curve times must be strictly increasing")
        if np.any(self.sps < 0):
            raise ValueError("sps values must be >= 0")

    def value_at(self, t: np.ndarray) -> np.ndarray:
        return np.interp(t, self.times, self.sps)


def estimate_sps(
    frames: list[tuple[float, int]],
    window_seconds: float = SPS_WINDOW_SECONDS,
    overlap: float = SPS_WINDOW_OVERLAP,
) -> SpsCurve:
    """Windowed SPS curve from (time, nuclei count) frames.

    Windows of window_seconds hop by (1-overlap)*window_seconds; each window
    contributes nuclei/window_seconds at its center; the piecewise curve is
    then linearly interpolated back onto the frame timestamps.  Spans shorter
    than one window fall back to a single whole-span window (flagged).
    """
    if not frames:
        raise ValueError("no frames to estimate a rate from")
    times = np.asarray([f[0] for f in frames], dtype=np.float64)
    nuclei = np.asarray([f[1] for f in frames], dtype=np.float64)
    if np.any(np.diff(times) < 0):
        raise ValueError("frames must be time-ordered")
    span = times[-1] - times[0]
    if span < window_seconds:
        total = nuclei.sum()
        rate = total / span if span > 0 else 0.0
        return SpsCurve(times, np.full(times.size, rate), single_window_fallback=True)

    hop = window_seconds * (1.0 - overlap)
    centers = []
    values = []
    start = times[0]
    while start + window_seconds <= times[-1] + 1e-9:
        lo = bisect_left(times.tolist(), start)
        hi = bisect_left(times.tolist(), start + window_seconds)
        count = nuclei[lo:hi].sum()
        centers.append(start + window_seconds / 2)
        values.append(count / window_seconds)
        start += hop
    curve = np.interp(times, centers, values)
    return SpsCurve(times, curve)


def pearson(a: SpsCurve, b: SpsCurve) -> float:
    """Pearson correlation of two curves resampled onto their common grid."""
    lo = max(a.times[0], b.times[0])
    hi = min(a.times[-1], b.times[-1])
    if hi <= lo:
        raise ValueError("curves do not overlap in time")
    grid = np.unique(np.concatenate([a.times, b.times]))
    grid = grid[(grid >= lo) & (grid <= hi)]
    if grid.size < 2:
        raise ValueError("need at least 2 common points")
    x = a.value_at(grid)
    y = b.value_at(grid)
    if np.allclose(x, x[0]) or np.allclose(y, y[0]):
        raise ValueError("correlation undefined for a constant curve")
    xc = x - x.mean()
    yc = y - y.mean()
    return float((xc * yc).sum() / np.sqrt((xc**2).sum() * (yc**2).sum()))


class RollingSps:
    """Online nuclei-per-second estimate over a trailing window, for telemetry."""

    def __init__(self, window_seconds: float = SPS_WINDOW_SECONDS):
        self.window_seconds = window_seconds
        self.entries: list[tuple[float, int]] = []
        self._start = 0

    def push(self, t: float, nuclei: int) -> None:
        self.entries.append((t, nuclei))

    def value(self, now: float) -> float:
        cutoff = now - self.window_seconds
        while self._start < len(self.entries) and self.entries[self._start][0] < cutoff:
            self._start += 1
        live = self.entries[self._start :]
        if not live:
            return 0.0
        # before a full window of speech exists, divide by elapsed time instead
        span = min(self.window_seconds, now - self.entries[0][0] + 0.08)
        total = sum(n for _, n in live)
        return total / max(span, 0.08)
