"""
Time-Tag Simulator for the QNG Depth Toolkit
Monte Carlo detection streams of the heralded autocorrelation setup: a trigger
detector plus two signal detectors behind a balanced splitter, with a variable
attenuator in the signal arm. Timestamps are integer picoseconds.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterator, List, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from config import (
    DEFAULT_JITTER_S,
    DEFAULT_REPETITION_RATE_HZ,
    DEFAULT_SEGMENT_PULSES,
    DEFAULT_SEGMENT_SECONDS,
    QNG_THREADS,
)
from errors import StreamOrderError
from sources import IdealSourceConfig, QuantumDotConfig, SourceConfig, SpdcConfig
from witnesses import transmittance

logger = logging.getLogger(__name__)

MODULE = "timetag_sim"

TRIGGER, SIGNAL_A, SIGNAL_B = 0, 1, 2
CHANNELS = (TRIGGER, SIGNAL_A, SIGNAL_B)

PS_PER_S = 1e12


class TimeTagRecord(NamedTuple):
    channel: int
    timestamp: int


class DetectorConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    efficiency: float = Field(default=1.0, ge=0.0, le=1.0)
    dark_rate_hz: float = Field(default=0.0, ge=0.0)
    jitter_sigma_s: float = Field(default=DEFAULT_JITTER_S, ge=0.0)


class DetectorSet(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    trigger: DetectorConfig = DetectorConfig()
    a: DetectorConfig = DetectorConfig()
    b: DetectorConfig = DetectorConfig()


class RunConfig(BaseModel):
    """
    One simulated acquisition. Pulsed sources (ideal, pulsed SPDC, quantum dot)
    run for ``pulse_count`` pulses or ``duration_s`` seconds; cw SPDC needs
    ``duration_s``. With ``source_enabled`` false only dark counts are generated.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    source: SourceConfig
    detectors: DetectorSet = DetectorSet()
    attenuator_db: float = Field(default=0.0, ge=0.0)
    seed: int = Field(default=0, ge=0, lt=2 ** 64)
    pulse_count: Optional[int] = Field(default=None, gt=0)
    duration_s: Optional[float] = Field(default=None, gt=0.0)
    repetition_rate_hz: Optional[float] = Field(default=None, gt=0.0)
    signal_delay_s: float = Field(default=20e-9, ge=0.0)
    segment_pulses: int = Field(default=DEFAULT_SEGMENT_PULSES, gt=0)
    segment_seconds: float = Field(default=DEFAULT_SEGMENT_SECONDS, gt=0.0)
    source_enabled: bool = True

    @model_validator(mode="after")
    def _check_length(self):
        if self.pulse_count is not None and self.duration_s is not None:
            raise ValueError("give pulse_count or duration_s, not both")
        if self.pulse_count is None and self.duration_s is None:
            raise ValueError("run length missing: set pulse_count or duration_s")
        if self.is_cw:
            if self.duration_s is None:
                raise ValueError("cw runs are specified by duration_s")
            if self.source_enabled and self.source.pair_rate_hz is None:
                raise ValueError("simulating a cw SPDC source needs pair_rate_hz")
        return self

    @property
    def is_cw(self) -> bool:
        return isinstance(self.source, SpdcConfig) and self.source.regime == "cw"

    @property
    def attenuator_T(self) -> float:
        return transmittance(self.attenuator_db)

    @property
    def pulse_rate_hz(self) -> float:
        rate = getattr(self.source, "repetition_rate_hz", None) or self.repetition_rate_hz
        return rate or DEFAULT_REPETITION_RATE_HZ

    @property
    def total_pulses(self) -> int:
        if self.pulse_count is not None:
            return self.pulse_count
        return int(round(self.duration_s * self.pulse_rate_hz))

    @property
    def duration_ps(self) -> int:
        if self.is_cw:
            return int(round(self.duration_s * PS_PER_S))
        return int(round(self.total_pulses * PS_PER_S / self.pulse_rate_hz))


class SegmentStats(BaseModel):
    """Per-segment bookkeeping; ``signal_clicks`` includes dark clicks on A and B."""
    model_config = ConfigDict(frozen=True)

    index: int
    start_ps: int
    stop_ps: int
    pulses: int
    heralds: int
    signal_photons: int
    signal_clicks: int
    signal_dark_counts: int
    trigger_dark_counts: int


@dataclass(frozen=True, eq=False)
class TimeTagStream:
    """Detection events as parallel read-only arrays."""

    channels: np.ndarray
    timestamps: np.ndarray
    duration_ps: int
    segments: Tuple[SegmentStats, ...] = field(default=())

    def __post_init__(self):
        channels = np.array(self.channels, dtype=np.uint8)
        timestamps = np.array(self.timestamps, dtype=np.int64)
        if channels.shape != timestamps.shape:
            raise StreamOrderError("channel and timestamp arrays differ in length", MODULE)
        channels.setflags(write=False)
        timestamps.setflags(write=False)
        object.__setattr__(self, "channels", channels)
        object.__setattr__(self, "timestamps", timestamps)
        object.__setattr__(self, "segments", tuple(self.segments))

    def __len__(self) -> int:
        return len(self.timestamps)

    def records(self) -> Iterator[TimeTagRecord]:
        for ch, ts in zip(self.channels.tolist(), self.timestamps.tolist()):
            yield TimeTagRecord(ch, ts)

    def channel_timestamps(self, channel: int) -> np.ndarray:
        return self.timestamps[self.channels == channel]

    def counts(self) -> dict:
        return {ch: int(np.count_nonzero(self.channels == ch)) for ch in CHANNELS}

    def is_sorted(self) -> bool:
        """True when ordered by timestamp, ties by channel."""
        if len(self) < 2:
            return True
        dt = np.diff(self.timestamps)
        dc = np.diff(self.channels.astype(np.int16))
        return bool(np.all((dt > 0) | ((dt == 0) & (dc >= 0))))


def split_seed(seed: int, segment_index: int) -> int:
    """128-bit Philox key for one segment, derived from the run seed."""
    words = np.random.SeedSequence(entropy=seed, spawn_key=(segment_index,)).generate_state(2, dtype=np.uint64)
    return int(words[0]) | (int(words[1]) << 64)


def segment_rng(seed: int, segment_index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=split_seed(seed, segment_index)))


class _Segment(NamedTuple):
    channels: np.ndarray
    timestamps: np.ndarray
    stats: SegmentStats


def _jitter_ps(rng: np.random.Generator, sigma_s: float, size: int) -> np.ndarray:
    if sigma_s == 0.0 or size == 0:
        return np.zeros(size, dtype=np.int64)
    return np.rint(rng.normal(0.0, sigma_s * PS_PER_S, size)).astype(np.int64)


def _darks(rng: np.random.Generator, rate_hz: float, start_ps: int, stop_ps: int) -> np.ndarray:
    span = stop_ps - start_ps
    if rate_hz == 0.0 or span <= 0:
        return np.empty(0, dtype=np.int64)
    n = rng.poisson(rate_hz * span / PS_PER_S)
    return rng.integers(start_ps, stop_ps, size=n, dtype=np.int64)


def _split_and_detect(rng: np.random.Generator, photons: np.ndarray, detectors: DetectorSet):
    """Balanced splitter then one click per detector if any photon registers."""
    to_a = rng.binomial(photons, 0.5)
    to_b = photons - to_a
    click_a = rng.binomial(to_a, detectors.a.efficiency) > 0
    click_b = rng.binomial(to_b, detectors.b.efficiency) > 0
    return click_a, click_b


class TimeTagSimulator:
    """Generates a run segment by segment and merges segments in index order."""

    def __init__(self, cfg: RunConfig, workers: Optional[int] = None):
        self.cfg = cfg
        # QNG_THREADS caps the pool
        self.workers = max(1, min(workers or QNG_THREADS, QNG_THREADS))
        self.T = cfg.attenuator_T
        self.delay_ps = int(round(cfg.signal_delay_s * PS_PER_S))
        self.duration_ps = cfg.duration_ps

    def segment_bounds(self) -> List[Tuple[int, int]]:
        """(start, stop) in pulses for pulsed runs, in picoseconds for cw runs."""
        if self.cfg.is_cw:
            step = int(round(self.cfg.segment_seconds * PS_PER_S))
            total = self.duration_ps
        else:
            step = self.cfg.segment_pulses
            total = self.cfg.total_pulses
        return [(start, min(start + step, total)) for start in range(0, total, step)]

    def run(self) -> TimeTagStream:
        bounds = self.segment_bounds()
        logger.info(
            f"🔬 Simulating {len(bounds)} segment(s) of {self.cfg.source.kind} "
            f"at {self.cfg.attenuator_db:g} dB with {self.workers} worker(s)"
        )
        generate = self._cw_segment if self.cfg.is_cw else self._pulsed_segment
        jobs = [(i, start, stop) for i, (start, stop) in enumerate(bounds)]
        if self.workers == 1 or len(jobs) <= 1:
            segments = [generate(*job) for job in jobs]
        else:
            with ThreadPoolExecutor(max_workers=min(self.workers, len(jobs))) as pool:
                segments = list(pool.map(lambda job: generate(*job), jobs))
        return self._merge(segments)

    def _pulse_times(self, start: int, stop: int) -> np.ndarray:
        period_ps = PS_PER_S / self.cfg.pulse_rate_hz
        return np.rint((np.arange(start, stop) + 0.5) * period_ps).astype(np.int64)

    def _pulse_boundary(self, pulse: int) -> int:
        return int(round(pulse * PS_PER_S / self.cfg.pulse_rate_hz))

    def _emit_pulsed(self, rng: np.random.Generator, k: int):
        """Per-pulse trigger click mask and signal photon number at the splitter."""
        source = self.cfg.source
        eff_t = self.cfg.detectors.trigger.efficiency
        if isinstance(source, IdealSourceConfig):
            trig = rng.random(k) < eff_t
            signal = rng.binomial(1, source.eta * self.T, k)
        elif isinstance(source, SpdcConfig):
            if source.statistics == "thermal":
                pairs = rng.geometric(1.0 - source.g, k) - 1
            else:
                pairs = rng.poisson(source.g / (1.0 - source.g), k)
            trig = rng.binomial(pairs, source.eta_trigger * eff_t) > 0
            signal = rng.binomial(pairs, source.eta_signal * self.T)
        elif isinstance(source, QuantumDotConfig):
            # sync trigger on every excitation pulse
            trig = np.ones(k, dtype=bool)
            signal = rng.binomial(1, source.eta_col * self.T, k) + rng.poisson(source.lambda_bg * self.T, k)
        else:
            raise TypeError(f"unsupported source {type(source).__name__}")
        return trig, signal.astype(np.int64)

    def _pulsed_segment(self, index: int, start: int, stop: int) -> _Segment:
        rng = segment_rng(self.cfg.seed, index)
        det = self.cfg.detectors
        k = stop - start
        if not self.cfg.source_enabled:
            empty = np.empty(0, dtype=np.int64)
            return self._assemble(
                rng, index, self._pulse_boundary(start), self._pulse_boundary(stop), k, 0, 0, (empty, empty, empty)
            )
        pulse_ps = self._pulse_times(start, stop)
        trig, signal = self._emit_pulsed(rng, k)
        click_a, click_b = _split_and_detect(rng, signal, det)

        t_trig = pulse_ps[trig] + _jitter_ps(rng, det.trigger.jitter_sigma_s, int(trig.sum()))
        t_a = pulse_ps[click_a] + self.delay_ps + _jitter_ps(rng, det.a.jitter_sigma_s, int(click_a.sum()))
        t_b = pulse_ps[click_b] + self.delay_ps + _jitter_ps(rng, det.b.jitter_sigma_s, int(click_b.sum()))

        t0, t1 = self._pulse_boundary(start), self._pulse_boundary(stop)
        return self._assemble(
            rng, index, t0, t1, k,
            heralds=int(trig.sum()),
            signal_photons=int(signal.sum()),
            tags=(t_trig, t_a, t_b),
        )

    def _cw_segment(self, index: int, start: int, stop: int) -> _Segment:
        rng = segment_rng(self.cfg.seed, index)
        det = self.cfg.detectors
        source = self.cfg.source
        span_s = (stop - start) / PS_PER_S
        empty = np.empty(0, dtype=np.int64)
        if not self.cfg.source_enabled:
            return self._assemble(rng, index, start, stop, 0, 0, 0, (empty, empty, empty))

        n_heralds = rng.poisson(source.pair_rate_hz * source.eta_trigger * span_s)
        herald_ps = np.sort(rng.integers(start, stop, size=n_heralds, dtype=np.int64))
        trig = rng.random(n_heralds) < det.trigger.efficiency
        twins = rng.binomial(1, source.eta_signal * self.T, n_heralds)

        n_bg = rng.poisson(source.background_rate_hz * self.T * span_s)
        bg_ps = rng.integers(start, stop, size=n_bg, dtype=np.int64)

        photon_ps = np.concatenate([herald_ps[twins > 0] + self.delay_ps, bg_ps])
        click_a, click_b = _split_and_detect(rng, np.ones(len(photon_ps), dtype=np.int64), det)

        t_trig = herald_ps[trig] + _jitter_ps(rng, det.trigger.jitter_sigma_s, int(trig.sum()))
        t_a = photon_ps[click_a] + _jitter_ps(rng, det.a.jitter_sigma_s, int(click_a.sum()))
        t_b = photon_ps[click_b] + _jitter_ps(rng, det.b.jitter_sigma_s, int(click_b.sum()))
        return self._assemble(
            rng, index, start, stop, 0,
            heralds=int(trig.sum()),
            signal_photons=len(photon_ps),
            tags=(t_trig, t_a, t_b),
        )

    def _assemble(self, rng, index, t0, t1, pulses, heralds, signal_photons, tags) -> _Segment:
        det = self.cfg.detectors
        darks = [_darks(rng, d.dark_rate_hz, t0, t1) for d in (det.trigger, det.a, det.b)]
        per_channel = [np.concatenate([t, d]) for t, d in zip(tags, darks)]
        channels = np.concatenate([np.full(len(t), ch, dtype=np.uint8) for ch, t in zip(CHANNELS, per_channel)])
        timestamps = np.concatenate(per_channel)
        stats = SegmentStats(
            index=index,
            start_ps=t0,
            stop_ps=t1,
            pulses=pulses,
            heralds=heralds,
            signal_photons=signal_photons,
            signal_clicks=len(per_channel[1]) + len(per_channel[2]),
            signal_dark_counts=len(darks[1]) + len(darks[2]),
            trigger_dark_counts=len(darks[0]),
        )
        return _Segment(channels, timestamps, stats)

    def _merge(self, segments: List[_Segment]) -> TimeTagStream:
        if segments:
            channels = np.concatenate([s.channels for s in segments])
            timestamps = np.concatenate([s.timestamps for s in segments])
        else:
            channels = np.empty(0, dtype=np.uint8)
            timestamps = np.empty(0, dtype=np.int64)
        channels, timestamps = canonical_order(channels, timestamps, self.duration_ps)
        stream = TimeTagStream(channels, timestamps, self.duration_ps, tuple(s.stats for s in segments))
        logger.info(f"✅ Generated {len(stream)} tags: {stream.counts()}")
        return stream


def canonical_order(channels: np.ndarray, timestamps: np.ndarray, duration_ps: int):
    """
    Sort by (timestamp, channel), push colliding tags on a channel forward by
    1 ps each and drop everything outside [0, duration).
    """
    keep = (timestamps >= 0) & (timestamps < duration_ps)
    channels, timestamps = channels[keep], timestamps[keep].copy()
    order = np.lexsort((channels, timestamps))
    channels, timestamps = channels[order], timestamps[order]
    for ch in CHANNELS:
        idx = np.flatnonzero(channels == ch)
        if idx.size > 1:
            steps = np.arange(idx.size, dtype=np.int64)
            timestamps[idx] = np.maximum.accumulate(timestamps[idx] - steps) + steps
    order = np.lexsort((channels, timestamps))
    channels, timestamps = channels[order], timestamps[order]
    inside = timestamps < duration_ps
    return channels[inside], timestamps[inside]


def simulate(cfg: RunConfig, workers: Optional[int] = None) -> TimeTagStream:
    """Simulate one run; the stream depends only on the config, never on ``workers``."""
    return TimeTagSimulator(cfg, workers).run()

