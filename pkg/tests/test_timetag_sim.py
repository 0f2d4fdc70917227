import math

import numpy as np
import pytest
from pydantic import ValidationError

from errors import StreamOrderError
from timetag_sim import (
    SIGNAL_A,
    SIGNAL_B,
    TRIGGER,
    DetectorConfig,
    DetectorSet,
    RunConfig,
    TimeTagRecord,
    TimeTagStream,
    canonical_order,
    simulate,
    split_seed,
)

PERFECT = DetectorSet(
    trigger=DetectorConfig(jitter_sigma_s=0.0),
    a=DetectorConfig(jitter_sigma_s=0.0),
    b=DetectorConfig(jitter_sigma_s=0.0),
)


def _run(source, **kw):
    kw.setdefault("detectors", PERFECT)
    return RunConfig(source=source, **kw)


def test_ideal_source_with_perfect_detectors():
    stream = simulate(_run({"kind": "ideal", "eta": 1.0}, pulse_count=10_000, seed=3))
    counts = stream.counts()
    assert counts[TRIGGER] == 10_000
    assert counts[SIGNAL_A] + counts[SIGNAL_B] == 10_000
    assert abs(counts[SIGNAL_A] - 5000) <= 4 * 50
    assert stream.is_sorted()
    assert stream.duration_ps == 10_000 * 100_000


def test_signal_tags_follow_their_trigger_by_the_delay():
    stream = simulate(_run({"kind": "ideal", "eta": 1.0}, pulse_count=100))
    triggers = stream.channel_timestamps(TRIGGER)
    signals = np.sort(np.concatenate([stream.channel_timestamps(SIGNAL_A), stream.channel_timestamps(SIGNAL_B)]))
    assert np.array_equal(signals - triggers, np.full(100, 20_000))


def test_dark_counts_only():
    detectors = DetectorSet(
        trigger=DetectorConfig(dark_rate_hz=100.0),
        a=DetectorConfig(dark_rate_hz=100.0),
        b=DetectorConfig(dark_rate_hz=100.0),
    )
    cfg = RunConfig(
        source={"kind": "ideal", "eta": 1.0},
        detectors=detectors,
        duration_s=100.0,
        segment_pulses=100_000_000,
        source_enabled=False,
        seed=5,
    )
    stream = simulate(cfg)
    for ch in (TRIGGER, SIGNAL_A, SIGNAL_B):
        assert abs(stream.counts()[ch] - 10_000) <= 4 * 100
    assert len(stream.segments) == 10
    assert sum(s.heralds for s in stream.segments) == 0


def test_stream_does_not_depend_on_worker_count():
    cfg = _run(
        {"kind": "spdc_pulsed", "g": 0.05, "tau_s": 2e-9, "repetition_rate_hz": 1e7, "eta_signal": 0.5},
        detectors=DetectorSet(a=DetectorConfig(dark_rate_hz=1e4), b=DetectorConfig(dark_rate_hz=1e4)),
        pulse_count=20_000,
        segment_pulses=1_000,
        seed=42,
    )
    serial = simulate(cfg, workers=1)
    parallel = simulate(cfg, workers=8)
    assert np.array_equal(serial.channels, parallel.channels)
    assert np.array_equal(serial.timestamps, parallel.timestamps)
    assert serial.segments == parallel.segments


def test_different_seeds_give_different_streams():
    source = {"kind": "ideal", "eta": 0.5}
    a = simulate(_run(source, pulse_count=1000, seed=1))
    b = simulate(_run(source, pulse_count=1000, seed=2))
    assert not (len(a) == len(b) and np.array_equal(a.timestamps, b.timestamps))


def test_split_seed():
    assert split_seed(7, 1) == split_seed(7, 1)
    assert split_seed(7, 1) != split_seed(7, 2)
    assert split_seed(7, 1) != split_seed(8, 1)
    assert 0 <= split_seed(2 ** 64 - 1, 0) < 2 ** 128


def test_segment_bookkeeping_is_conserved():
    stream = simulate(_run(
        {"kind": "spdc_pulsed", "g": 0.1, "tau_s": 2e-9, "repetition_rate_hz": 1e7, "eta_signal": 0.7},
        pulse_count=25_000,
        segment_pulses=10_000,
        seed=9,
    ))
    counts = stream.counts()
    assert [s.pulses for s in stream.segments] == [10_000, 10_000, 5_000]
    assert sum(s.heralds for s in stream.segments) == counts[TRIGGER]
    assert sum(s.signal_clicks for s in stream.segments) == counts[SIGNAL_A] + counts[SIGNAL_B]
    assert all(s.signal_clicks <= s.signal_photons for s in stream.segments)
    assert stream.segments[1].start_ps == stream.segments[0].stop_ps


def test_colliding_dark_counts_are_nudged_apart():
    detectors = DetectorSet(
        trigger=DetectorConfig(dark_rate_hz=1e9, jitter_sigma_s=0.0),
        a=DetectorConfig(dark_rate_hz=1e9, jitter_sigma_s=0.0),
        b=DetectorConfig(dark_rate_hz=1e9, jitter_sigma_s=0.0),
    )
    stream = simulate(RunConfig(source={"kind": "ideal", "eta": 1.0}, detectors=detectors, pulse_count=1000))
    assert stream.is_sorted()
    assert stream.timestamps.min() >= 0
    assert stream.timestamps.max() < stream.duration_ps
    for ch in (TRIGGER, SIGNAL_A, SIGNAL_B):
        ts = stream.channel_timestamps(ch)
        assert len(np.unique(ts)) == len(ts)


def test_canonical_order():
    channels = np.array([1, 1, 0, 2, 2], dtype=np.uint8)
    timestamps = np.array([5, 5, 5, -1, 10], dtype=np.int64)
    ch, ts = canonical_order(channels, timestamps, duration_ps=10)
    assert ch.tolist() == [0, 1, 1]
    assert ts.tolist() == [5, 5, 6]


def test_stream_arrays_are_read_only():
    stream = TimeTagStream([0, 1], [1, 2], duration_ps=3)
    with pytest.raises(ValueError):
        stream.timestamps[0] = 7
    assert list(stream.records()) == [TimeTagRecord(0, 1), TimeTagRecord(1, 2)]
    with pytest.raises(StreamOrderError):
        TimeTagStream([0, 1], [1], duration_ps=3)


def test_halving_transmittance_halves_the_click_rate():
    source = {"kind": "ideal", "eta": 0.8}
    n = 200_000
    full = simulate(_run(source, pulse_count=n, seed=11)).counts()
    half = simulate(_run(source, pulse_count=n, seed=12, attenuator_db=10.0 * math.log10(2.0))).counts()
    clicks_full = full[SIGNAL_A] + full[SIGNAL_B]
    clicks_half = half[SIGNAL_A] + half[SIGNAL_B]
    p_full, p_half = clicks_full / n, clicks_half / n
    sigma = math.sqrt(p_half * (1 - p_half) / n + 0.25 * p_full * (1 - p_full) / n)
    assert abs(p_half - 0.5 * p_full) <= 3 * sigma


def test_spdc_herald_rate_matches_the_gain():
    n = 100_000
    stream = simulate(_run(
        {"kind": "spdc_pulsed", "g": 0.1, "tau_s": 2e-9, "repetition_rate_hz": 1e7},
        pulse_count=n,
        seed=21,
    ))
    sigma = math.sqrt(n * 0.1 * 0.9)
    assert abs(stream.counts()[TRIGGER] - 0.1 * n) <= 5 * sigma


def test_quantum_dot_triggers_every_pulse():
    stream = simulate(_run({"kind": "quantum_dot", "eta_col": 0.1, "lambda_bg": 0.01}, pulse_count=5000))
    assert stream.counts()[TRIGGER] == 5000


def test_cw_herald_rate():
    cfg = _run(
        {"kind": "spdc_cw", "tau_s": 1e-9, "pair_rate_hz": 1e6, "eta_trigger": 0.5, "eta_signal": 0.5},
        duration_s=0.01,
        segment_seconds=0.002,
        seed=4,
    )
    stream = simulate(cfg)
    assert len(stream.segments) == 5
    assert abs(stream.counts()[TRIGGER] - 5000) <= 5 * math.sqrt(5000)
    assert stream.is_sorted()
    assert stream.duration_ps == 10_000_000_000


@pytest.mark.parametrize("kw", [
    dict(source={"kind": "ideal", "eta": 1.0}),
    dict(source={"kind": "ideal", "eta": 1.0}, pulse_count=10, duration_s=1.0),
    dict(source={"kind": "spdc_cw", "tau_s": 1e-9, "pair_rate_hz": 1e6}, pulse_count=10),
    dict(source={"kind": "spdc_cw", "tau_s": 1e-9}, duration_s=1.0),
    dict(source={"kind": "ideal", "eta": 1.0}, pulse_count=10, seed=-1),
    dict(source={"kind": "ideal", "eta": 1.0}, pulse_count=10, seed=2 ** 64),
])
def test_run_config_rejects_bad_lengths(kw):
    with pytest.raises(ValidationError):
        RunConfig(**kw)


def test_cw_dark_run_needs_no_pair_rate():
    cfg = RunConfig(source={"kind": "spdc_cw", "tau_s": 1e-9}, duration_s=0.001, source_enabled=False)
    assert len(simulate(cfg)) == 0
