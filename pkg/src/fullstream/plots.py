"""Figure rendering for bench reports: every CLI report path can drop a PNG
next to its delimited output."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .bench import BenchReport, ChunkRow, RateEvalResult


def render_rate_curves(result: RateEvalResult, path, title: str = "speaking-rate control") -> None:
    fig, ax = plt.subplots(figsize=(8, 4))
    ax.plot(result.achieved.times, result.target.value_at(result.achieved.times),
            label="target", color="tab:blue", lw=1.8)
    ax.plot(result.achieved.times, result.achieved.sps,
            label="achieved", color="tab:orange", lw=1.2)
    ax.set_xlabel("time (s)")
    ax.set_ylabel("syllables / s")
    corr = "n/a" if result.corr is None else f"{result.corr:.3f}"
    ax.set_title(f"{title} (corr={corr})")
    ax.legend(loc="best")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_sweep(report: BenchReport, path) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    by_tps: dict = {}
    for row in report.rows:
        if row.error or row.fpl_ms is None:
            continue
        by_tps.setdefault(row.tps, []).append(row)
    for tps, rows in sorted(by_tps.items(), key=lambda kv: (kv[0] is None, kv[0])):
        rows = sorted(rows, key=lambda r: r.la_min)
        label = "tps=inf" if tps is None else f"tps={tps:g}"
        ax1.plot([r.la_min for r in rows], [r.fpl_ms for r in rows], marker="o", label=label)
        ax2.plot([r.la_min for r in rows], [r.stall_total_ms for r in rows], marker="s", label=label)
    ax1.set_xlabel("minimum look-ahead (phonemes)")
    ax1.set_ylabel("first-packet latency (ms)")
    ax1.grid(alpha=0.3)
    ax1.legend()
    ax2.set_xlabel("minimum look-ahead (phonemes)")
    ax2.set_ylabel("total stall time (ms)")
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_chunk_report(rows: list[ChunkRow], path) -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    rows = sorted(rows, key=lambda r: r.chunk_words)
    xs = [r.chunk_words for r in rows]
    ax.plot(xs, [r.fpl_ms for r in rows], marker="o", label="fpl (ms)")
    ax.plot(xs, [r.stall_total_ms for r in rows], marker="s", label="stall total (ms)")
    ax.set_xlabel("chunk size (words)")
    ax.set_ylabel("milliseconds")
    ax.grid(alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_histograms(p_acc, p_target, path) -> None:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    xs = range(len(p_acc))
    width = 0.4
    ax.bar([x - width / 2 for x in xs], p_acc, width=width, label="accumulated")
    ax.bar([x + width / 2 for x in xs], p_target, width=width, label="target")
    ax.set_xlabel("duration token")
    ax.set_ylabel("probability")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
