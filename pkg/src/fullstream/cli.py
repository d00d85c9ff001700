"""Command-line interface: synthesis runs, benchmark sweeps, rate-following
reports (CSV plus rendered figures), and the control service."""

from __future__ import annotations

import json
import pathlib

import click

from . import __version__
from .backends import make_backend
from .bench import (
    SweepSpec,
    chunk_report_csv,
    chunk_size_run,
    measure_fpl,
    measure_rtf,
    rate_eval,
    run_rate_scenario,
    sweep,
)
from .engine import EngineConfig, Session
from .events import write_events
from .phonemize import load_phoneme_file
from .rate import RateSchedule
from .sampling import GuidanceConfig, SamplerConfig


def _parse_tps(value: str) -> float | None:
    if value.lower() in ("inf", "unlimited", "none"):
        return None
    return float(value)


@click.group()
@click.version_option(__version__)
def main():
    """Full-stream speech-token synthesis engine."""


@main.command()
@click.option("--text", default=None, help="Input text; words arrive at the token rate.")
@click.option("--phonemes-file", type=click.Path(exists=True), default=None,
              help="Pre-phonemized input, one `symbol,punct,nucleus` line per phoneme.")
@click.option("--tps", default="inf", show_default=True, help="Tokens/second, or 'inf'.")
@click.option("--la-min", default=3, show_default=True)
@click.option("--la-max", default=25, show_default=True)
@click.option("--src/--no-src", default=False, show_default=True, help="Speaking-rate control.")
@click.option("--schedule", default="const:4", show_default=True,
              help="const:S | ramp:A:B[:DUR] | alt:LOW:HIGH[:PERIOD]")
@click.option("--gamma-temp", default=1.5, show_default=True)
@click.option("--gamma-depth", default=3.0, show_default=True)
@click.option("--cfg/--no-cfg", default=True, show_default=True, help="Classifier-free guidance.")
@click.option("--seed", default=0, show_default=True)
@click.option("--clock", type=click.Choice(["simulated", "wall"]), default="simulated",
              show_default=True)
@click.option("--backend", default="toy", show_default=True, help="toy | scripted[:FILE]")
@click.option("--out", type=click.Path(), default="events.jsonl", show_default=True)
def synth(text, phonemes_file, tps, la_min, la_max, src, schedule, gamma_temp,
          gamma_depth, cfg, seed, clock, backend, out):
    """Run one synthesis session and write its event log."""
    if (text is None) == (phonemes_file is None):
        raise click.UsageError("provide exactly one of --text or --phonemes-file")
    config = EngineConfig(
        tps=_parse_tps(tps),
        la_min=la_min,
        la_max=la_max,
        src_enabled=src,
        schedule=RateSchedule.parse(schedule),
        clock=clock,
        seed=seed,
        sampler=SamplerConfig(rng_seed=seed),
        guidance=GuidanceConfig(
            gamma_temp=gamma_temp,
            gamma_depth=gamma_depth,
            text_cfg_enabled=cfg,
            audio_cfg_enabled=cfg,
            speaker_cfg_enabled=cfg,
        ),
    )
    session = Session(config, make_backend(backend, seed))
    if text is not None:
        for token in text.split():
            session.feed_text(token)
    else:
        for phoneme in load_phoneme_file(phonemes_file):
            session.feed_phonemes([phoneme], label=f"p:{phoneme.symbol}")
    session.end_text()
    events = session.run_to_done()
    write_events(events, out)
    fpl = measure_fpl(events)
    done = events[-1]
    click.echo(f"wrote {len(events)} events to {out}")
    click.echo(
        f"frames={done.totals['frames']} "
        f"fpl_ms={'n/a' if fpl is None else f'{fpl:.1f}'} "
        f"rtf={measure_rtf(events):.4f} stalls={done.totals['stall_count']}"
    )


@main.group()
def bench():
    """Latency and rate-following experiments."""


@bench.command("sweep")
@click.option("--tps", default="10,20,40,inf", show_default=True, help="Comma-separated grid.")
@click.option("--la", default="1,2,3,4,5", show_default=True, help="Comma-separated grid.")
@click.option("--seed", default=0, show_default=True)
@click.option("--reps", default=1, show_default=True)
@click.option("--backend", default="scripted", show_default=True)
@click.option("--clock", type=click.Choice(["simulated", "wall"]), default="simulated",
              show_default=True)
@click.option("--schedule", default=None, help="Enable rate control with this schedule.")
@click.option("--phonemes", default=120, show_default=True, help="Synthetic stream length.")
@click.option("--out", type=click.Path(), required=True)
@click.option("--figures/--no-figures", default=True, show_default=True)
def bench_sweep(tps, la, seed, reps, backend, clock, schedule, phonemes, out, figures):
    """Token-rate x look-ahead grid; one fresh session per cell."""
    spec = SweepSpec(
        tps_values=[_parse_tps(v) for v in tps.split(",")],
        la_values=[int(v) for v in la.split(",")],
        repetitions=reps,
        schedule=RateSchedule.parse(schedule) if schedule else None,
        backend=backend,
        clock=clock,
        seed=seed,
        phoneme_count=phonemes,
    )
    report = sweep(spec)
    report.write_csv(out)
    meta_path = pathlib.Path(out).with_suffix(".meta.json")
    meta_path.write_text(json.dumps(report.metadata, indent=2))
    click.echo(f"wrote {len(report.rows)} rows to {out}")
    if figures:
        from .plots import render_sweep

        fig_path = pathlib.Path(out).with_suffix(".png")
        render_sweep(report, fig_path)
        click.echo(f"rendered {fig_path}")


@bench.command("rate")
@click.option("--schedule", default="ramp:1:7", show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--backend", default="scripted", show_default=True)
@click.option("--beta", default=5.0, show_default=True)
@click.option("--out", type=click.Path(), required=True)
@click.option("--figures/--no-figures", default=True, show_default=True)
def bench_rate(schedule, seed, backend, beta, out, figures):
    """Rate-following run: target vs achieved curves and their correlation."""
    sched = RateSchedule.parse(schedule)
    events = run_rate_scenario(sched, seed=seed, backend=backend, beta=beta)
    result = rate_eval(events, sched)
    result.write_csv(out)
    corr = "n/a" if result.corr is None else f"{result.corr:.4f}"
    click.echo(f"corr={corr}; wrote curves to {out}")
    if figures:
        from .plots import render_rate_curves

        fig_path = pathlib.Path(out).with_suffix(".png")
        render_rate_curves(result, fig_path, title=f"schedule {schedule}")
        click.echo(f"rendered {fig_path}")


@bench.command("chunk")
@click.option("--chunks", default="1,2,4", show_default=True, help="Word counts per chunk.")
@click.option("--tps", default=10.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--backend", default="scripted", show_default=True)
@click.option("--text", default="the quick brown fox jumps over the lazy dog and runs far away "
                               "to find a quiet place near the old river bank",
              show_default=False, help="Corpus delivered in chunks.")
@click.option("--out", type=click.Path(), required=True)
@click.option("--figures/--no-figures", default=True, show_default=True)
def bench_chunk(chunks, tps, seed, backend, text, out, figures):
    """Effect of input chunk size on startup latency and stalling."""
    words = text.split()
    rows = [
        chunk_size_run(words, int(c), tps=tps, seed=seed, backend=backend)
        for c in chunks.split(",")
    ]
    with open(out, "w", encoding="utf-8") as fh:
        fh.write(chunk_report_csv(rows))
    click.echo(f"wrote {len(rows)} rows to {out}")
    if figures:
        from .plots import render_chunk_report

        fig_path = pathlib.Path(out).with_suffix(".png")
        render_chunk_report(rows, fig_path)
        click.echo(f"rendered {fig_path}")


@main.command()
@click.option("--port", default=8765, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--max-sessions", default=8, show_default=True)
@click.option("--backend", default="toy", show_default=True, help="toy | scripted[:FILE]")
@click.option("--seed", default=0, show_default=True)
@click.option("--console-dir", type=click.Path(exists=True), default=None,
              help="Static console bundle to serve at /console.")
def serve(port, host, max_sessions, backend, seed, console_dir):
    """Run the control service (WebSocket sessions + health endpoint)."""
    import uvicorn

    from .service import ServiceSettings, create_app

    app = create_app(ServiceSettings(
        max_sessions=max_sessions, backend=backend, seed=seed, console_dir=console_dir,
    ))
    click.echo(f"fullstream control service on ws://{host}:{port}/session")
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
