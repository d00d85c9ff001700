import numpy as np
import pytest

from fullstream.bench import (
    BenchReport,
    SweepSpec,
    chunk_report_csv,
    chunk_size_run,
    measure_fpl,
    measure_rtf,
    phoneme_budget,
    rate_eval,
    run_cell,
    run_rate_scenario,
    stall_stats,
    sweep,
    synthetic_phonemes,
)
from fullstream.engine import CostModel, EngineConfig, Session
from fullstream.backends import ScriptedBackend, stationary_program
from fullstream.events import Done, FrameEmitted, TextIngested, read_events, write_events
from fullstream.rate import RateSchedule
from fullstream.sampling import GuidanceConfig

GUIDANCE_OFF = GuidanceConfig(text_cfg_enabled=False, audio_cfg_enabled=False,
                              speaker_cfg_enabled=False)


def run_simple(tps=None, la_min=3, cost=CostModel(), phonemes=20, seed=1):
    config = EngineConfig(tps=tps, la_min=la_min, cost_model=cost, seed=seed,
                          guidance=GUIDANCE_OFF)
    session = Session(config, ScriptedBackend(stationary_program()))
    for p in synthetic_phonemes(phonemes):
        session.feed_phonemes([p], label="p")
    session.end_text()
    return session.run_to_done()


class TestMeasureFpl:
    def test_zero_cost_immediate_text_gives_zero(self):
        events = run_simple(cost=CostModel(tt_ms=0.0, dt_ms=0.0))
        assert measure_fpl(events) == pytest.approx(0.0, abs=1e-9)

    def test_simulated_arrival_arithmetic(self):
        events = run_simple(tps=10.0, cost=CostModel(tt_ms=3.0, dt_ms=2.0))
        # 3rd one-phoneme token at 200 ms plus the 5 ms frame cost
        assert measure_fpl(events) == pytest.approx(205.0)

    def test_no_frame_reports_unavailable(self):
        events = [TextIngested(t=0.0, token="a", phonemes=1)]
        assert measure_fpl(events) is None

    def test_no_text_rejected(self):
        with pytest.raises(ValueError):
            measure_fpl([])


class TestMeasureRtf:
    def test_formula_at_table_values(self):
        # 10 s of audio in 2.56 s of processing
        done = Done(t=0.0, totals={"frames": 125, "audio_seconds": 10.0,
                                   "processing_ms": 2560.0})
        assert measure_rtf([done]) == pytest.approx(0.256)

    def test_processing_equal_to_audio_is_one(self):
        done = Done(t=0.0, totals={"frames": 10, "audio_seconds": 0.8,
                                   "processing_ms": 800.0})
        assert measure_rtf([done]) == pytest.approx(1.0)

    def test_default_costs_give_one_sixteenth(self):
        events = run_simple()
        # 5 ms per 80 ms frame
        assert measure_rtf(events) == pytest.approx(0.0625)

    def test_eight_ms_per_frame_gives_point_one(self):
        events = run_simple(cost=CostModel(tt_ms=5.0, dt_ms=3.0))
        assert measure_rtf(events) == pytest.approx(0.1)

    def test_zero_frames_rejected(self):
        done = Done(t=0.0, totals={"frames": 0, "audio_seconds": 0.0, "processing_ms": 1.0})
        with pytest.raises(ValueError):
            measure_rtf([done])


class TestMeasurementPurity:
    def test_serialized_log_measures_identically(self, tmp_path):
        events = run_simple(tps=10.0, phonemes=40)
        path = tmp_path / "log.jsonl"
        write_events(events, path)
        again = read_events(path)
        assert measure_fpl(again) == measure_fpl(events)
        assert measure_rtf(again) == measure_rtf(events)
        assert stall_stats(again) == stall_stats(events)


class TestSweep:
    def spec(self, **kw):
        defaults = dict(tps_values=[10.0, 40.0, None], la_values=[1, 2, 3, 4, 5], seed=7)
        defaults.update(kw)
        return SweepSpec(**defaults)

    def test_deterministic_repetition(self):
        a = sweep(self.spec())
        b = sweep(self.spec())
        assert a.to_csv() == b.to_csv()

    def test_fpl_monotone_in_la_at_tps10(self):
        report = sweep(self.spec(tps_values=[10.0]))
        fpls = [r.fpl_ms for r in sorted(report.rows, key=lambda r: r.la_min)]
        assert all(b >= a for a, b in zip(fpls, fpls[1:]))

    def test_stall_pattern_matches_queueing(self):
        report = sweep(self.spec())
        by = {(r.tps, r.la_min): r for r in report.rows}
        assert by[(10.0, 3)].stall_count > 0
        assert by[(40.0, 3)].stall_count == 0
        assert by[(None, 3)].stall_count == 0

    def test_csv_column_order_fixed(self):
        report = sweep(self.spec(tps_values=[None], la_values=[3]))
        header = report.to_csv().splitlines()[0]
        assert header == "tps,la_min,fpl_ms,rtf,stall_count,stall_total_ms,corr,frames,seed"

    def test_corr_populated_with_schedule(self):
        report = sweep(self.spec(tps_values=[None], la_values=[3],
                                 schedule=RateSchedule.ramp(1, 7, 20),
                                 phoneme_count=220))
        assert report.rows[0].corr is not None

    def test_cell_failure_becomes_error_row(self):
        spec = self.spec(tps_values=[None], la_values=[3], backend="scripted:/missing.json")
        report = sweep(spec)
        assert report.rows[0].error
        assert report.metadata["errors"]

    def test_metadata_declares_substituted_metrics(self):
        report = sweep(self.spec(tps_values=[None], la_values=[3]))
        assert "stall" in report.metadata["intelligibility"]


class TestRateEval:
    def test_ramp_correlation_high(self):
        sched = RateSchedule.ramp(1, 7, 20)
        events = run_rate_scenario(sched, seed=3)
        result = rate_eval(events, sched)
        assert result.corr is not None and result.corr >= 0.9

    def test_constant_achieved_curve_rejected_as_none(self):
        # rate control off, input with no syllable nuclei: achieved rate is
        # identically zero and the correlation is undefined
        from fullstream.alignment import Phoneme

        config = EngineConfig(tps=None, seed=1, guidance=GUIDANCE_OFF)
        session = Session(config, ScriptedBackend(stationary_program()))
        for i in range(120):
            session.feed_phonemes([Phoneme(symbol=1 + i % 20)], label="p")
        session.end_text()
        events = session.run_to_done()
        result = rate_eval(events, RateSchedule.ramp(1, 7, 20))
        assert np.allclose(result.achieved.sps, 0.0)
        assert result.corr is None

    def test_curves_csv_shape(self):
        sched = RateSchedule.ramp(2, 5, 10)
        events = run_rate_scenario(sched, seed=5)
        result = rate_eval(events, sched)
        lines = result.to_csv().splitlines()
        assert lines[0] == "time_s,target_sps,achieved_sps"
        assert len(lines) == len(result.achieved.times) + 1


class TestChunkRuns:
    words = ("streaming synthesis needs steady text input to keep the "
             "alignment gate open during playback of long sentences").split()

    def test_bigger_chunks_reduce_startup_latency(self):
        fpl1 = chunk_size_run(self.words, 1, tps=10.0, seed=2).fpl_ms
        fpl4 = chunk_size_run(self.words, 4, tps=10.0, seed=2).fpl_ms
        assert fpl4 <= fpl1

    def test_single_chunk_equals_unlimited_text(self):
        whole = chunk_size_run(self.words, len(self.words), tps=10.0, seed=2)
        config = EngineConfig(tps=None, seed=2, guidance=GUIDANCE_OFF)
        session = Session(config, ScriptedBackend(stationary_program()))
        from fullstream.phonemize import builtin_g2p

        phonemes = [p for w in self.words for p in builtin_g2p(w)]
        session.feed_phonemes(phonemes, label=" ".join(self.words))
        session.end_text()
        events = session.run_to_done()
        assert whole.fpl_ms == pytest.approx(measure_fpl(events))
        assert whole.stall_count == stall_stats(events)[0] == 0

    def test_fixed_seed_deterministic(self):
        a = chunk_size_run(self.words, 2, tps=10.0, seed=9)
        b = chunk_size_run(self.words, 2, tps=10.0, seed=9)
        assert a == b

    def test_report_csv(self):
        rows = [chunk_size_run(self.words, c, tps=10.0, seed=1) for c in (1, 4)]
        text = chunk_report_csv(rows)
        assert text.splitlines()[0].startswith("chunk_words,fpl_ms")
        assert len(text.splitlines()) == 3

    def test_rejects_zero_chunk(self):
        with pytest.raises(ValueError):
            chunk_size_run(self.words, 0)


def test_phoneme_budget_scales_with_schedule():
    assert phoneme_budget(RateSchedule.ramp(1, 7, 20)) == pytest.approx(200, abs=1)
    assert phoneme_budget(RateSchedule.constant(4)) == 200
    assert phoneme_budget(RateSchedule.alternating(1, 7, 40)) == 180
