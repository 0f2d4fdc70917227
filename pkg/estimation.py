"""
Estimation for the QNG Depth Toolkit
Coincidence counting on time-tag streams, click-probability estimates with
binomial errors, the detector click model and the optional de-splitting
inversion.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from typing import Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from config import QNG_THREADS
from errors import DomainError, InversionError, StreamOrderError
from fock_core import ClickProbabilities, PhotonNumberDistribution
from timetag_sim import PS_PER_S, SIGNAL_A, SIGNAL_B, TRIGGER, TimeTagStream

logger = logging.getLogger(__name__)

MODULE = "estimation"

# Histogram range searched for the trigger-to-signal delay
DEFAULT_MAX_DELAY_S = 200e-9


class CoincidenceCounts(BaseModel):
    model_config = ConfigDict(frozen=True)

    n_trigger: int = Field(ge=0)
    n_none: int = Field(ge=0)
    n_a_only: int = Field(ge=0)
    n_b_only: int = Field(ge=0)
    n_both: int = Field(ge=0)
    tau_s: float = Field(gt=0.0)
    offset_s: float = 0.0

    @model_validator(mode="after")
    def _check_total(self):
        if self.n_none + self.n_a_only + self.n_b_only + self.n_both != self.n_trigger:
            raise ValueError("click classes do not add up to n_trigger")
        return self

    def __add__(self, other: "CoincidenceCounts") -> "CoincidenceCounts":
        return CoincidenceCounts(
            n_trigger=self.n_trigger + other.n_trigger,
            n_none=self.n_none + other.n_none,
            n_a_only=self.n_a_only + other.n_a_only,
            n_b_only=self.n_b_only + other.n_b_only,
            n_both=self.n_both + other.n_both,
            tau_s=self.tau_s,
            offset_s=self.offset_s,
        )


class ClickEstimate(ClickProbabilities):
    """Click probabilities measured from ``n_trigger`` heralds with window ``tau_s``."""

    n_trigger: int = Field(gt=0)
    tau_s: float = Field(gt=0.0)


def _window_ps(tau_s: float, offset_s: float) -> Tuple[int, int]:
    """(start, end) of the inclusive window relative to a trigger tag."""
    tau_ps = int(round(tau_s * PS_PER_S))
    offset_ps = int(round(offset_s * PS_PER_S))
    start = offset_ps - tau_ps // 2
    return start, start + tau_ps


def _classify(triggers: np.ndarray, a: np.ndarray, b: np.ndarray, start: int, end: int) -> Tuple[int, int, int, int]:
    lo, hi = triggers + start, triggers + end
    has_a = np.searchsorted(a, hi, side="right") > np.searchsorted(a, lo, side="left")
    has_b = np.searchsorted(b, hi, side="right") > np.searchsorted(b, lo, side="left")
    both = int(np.count_nonzero(has_a & has_b))
    a_only = int(np.count_nonzero(has_a & ~has_b))
    b_only = int(np.count_nonzero(~has_a & has_b))
    return len(triggers) - both - a_only - b_only, a_only, b_only, both


def _split_channels(stream: TimeTagStream):
    if not stream.is_sorted():
        raise StreamOrderError("time-tag stream is not sorted by (timestamp, channel)", MODULE)
    return (
        stream.channel_timestamps(TRIGGER),
        stream.channel_timestamps(SIGNAL_A),
        stream.channel_timestamps(SIGNAL_B),
    )


def _check_tau(tau_s: float):
    if not tau_s > 0.0:
        raise DomainError(f"coincidence window must be > 0, got {tau_s!r}", MODULE)


def count_coincidences(stream: TimeTagStream, tau_s: float, offset_s: float = 0.0) -> CoincidenceCounts:
    """
    Classify the A/B clicks inside [t + offset - tau/2, t + offset + tau/2] of every
    trigger tag t. Overlapping windows are each counted.
    """
    _check_tau(tau_s)
    triggers, a, b = _split_channels(stream)
    start, end = _window_ps(tau_s, offset_s)
    none, a_only, b_only, both = _classify(triggers, a, b, start, end)
    return CoincidenceCounts(
        n_trigger=len(triggers), n_none=none, n_a_only=a_only, n_b_only=b_only, n_both=both,
        tau_s=tau_s, offset_s=offset_s,
    )


def count_coincidences_partitioned(
    stream: TimeTagStream,
    tau_s: float,
    offset_s: float = 0.0,
    partitions: Optional[int] = None,
    workers: Optional[int] = None,
) -> CoincidenceCounts:
    """
    Same counts as ``count_coincidences``, folded over trigger partitions in a
    thread pool. Each partition sees every signal tag its windows can reach.
    """
    _check_tau(tau_s)
    triggers, a, b = _split_channels(stream)
    start, end = _window_ps(tau_s, offset_s)
    workers = max(1, min(workers or QNG_THREADS, QNG_THREADS))
    parts = max(1, partitions or workers)
    chunks = [c for c in np.array_split(triggers, parts) if len(c)]

    def fold(chunk: np.ndarray) -> Tuple[int, int, int, int]:
        lo, hi = chunk[0] + start, chunk[-1] + end
        a_part = a[np.searchsorted(a, lo, side="left"):np.searchsorted(a, hi, side="right")]
        b_part = b[np.searchsorted(b, lo, side="left"):np.searchsorted(b, hi, side="right")]
        return _classify(chunk, a_part, b_part, start, end)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(fold, chunks))
    none, a_only, b_only, both = (sum(col) for col in zip(*results)) if results else (0, 0, 0, 0)
    return CoincidenceCounts(
        n_trigger=len(triggers), n_none=none, n_a_only=a_only, n_b_only=b_only, n_both=both,
        tau_s=tau_s, offset_s=offset_s,
    )


def estimate(counts: CoincidenceCounts) -> ClickEstimate:
    """Relative frequencies of the three click classes with binomial standard errors."""
    n = counts.n_trigger
    if n == 0:
        raise DomainError("no trigger tags in the stream; nothing to estimate", MODULE)
    p0 = counts.n_none / n
    p1 = (counts.n_a_only + counts.n_b_only) / n
    p2plus = counts.n_both / n
    sigma = lambda p: math.sqrt(p * (1.0 - p) / n)
    return ClickEstimate(
        p0=p0, p1=p1, p2plus=p2plus,
        sigma_p0=sigma(p0), sigma_p1=sigma(p1), sigma_p2plus=sigma(p2plus),
        n_trigger=n, tau_s=counts.tau_s,
    )


def invert_click_statistics(p: ClickProbabilities) -> PhotonNumberDistribution:
    """
    Undo the balanced splitter assuming ideal detectors and at most two photons:
    P2 = 2 p2+, P1 = p1 - p2+, P0 = p0.
    """
    if p.p2plus > p.p1:
        raise InversionError(
            f"p2+ = {p.p2plus:.4g} exceeds p1 = {p.p1:.4g}; at most two photons cannot explain it", MODULE
        )
    probs = np.array([p.p0, p.p1 - p.p2plus, 2.0 * p.p2plus])
    if probs.min() < 0.0:
        raise InversionError(f"inversion produced negative probabilities {probs.tolist()}", MODULE)
    return PhotonNumberDistribution(probs)


def click_model(
    dist: PhotonNumberDistribution,
    efficiency_a: float = 1.0,
    efficiency_b: float = 1.0,
    dark_prob_a: float = 0.0,
    dark_prob_b: float = 0.0,
) -> ClickProbabilities:
    """
    Click probabilities of ``dist`` sent onto a balanced splitter with two
    threshold detectors; each detector also fires from a dark count with the
    given per-window probability.
    """
    ns = np.arange(dist.n_max + 1)
    silent_a = (1.0 - 0.5 * efficiency_a) ** ns
    silent_b = (1.0 - 0.5 * efficiency_b) ** ns
    silent_both = (1.0 - 0.5 * (efficiency_a + efficiency_b)) ** ns
    q_a = 1.0 - dark_prob_a
    q_b = 1.0 - dark_prob_b
    none = float(dist.probs @ silent_both) * q_a * q_b
    a_only = q_b * float(dist.probs @ (silent_b - silent_both * q_a))
    b_only = q_a * float(dist.probs @ (silent_a - silent_both * q_b))
    return ClickProbabilities.from_values(a_only + b_only, max(0.0, 1.0 - none - a_only - b_only))


def split_click_probabilities(dist: PhotonNumberDistribution) -> ClickProbabilities:
    """Ideal-detector click probabilities: p2+ is sum P_n (1 - 2^(1-n))."""
    return click_model(dist)


def dark_click_probability(dark_rate_hz: float, tau_s: float) -> float:
    """Chance of at least one dark count inside one window."""
    return -math.expm1(-dark_rate_hz * tau_s)


def calibrate_offset(
    stream: TimeTagStream,
    bin_s: float = 1e-9,
    max_delay_s: float = DEFAULT_MAX_DELAY_S,
) -> float:
    """
    Trigger-to-signal delay: modal bin of the histogram of signal-minus-previous
    trigger delays, refined by the median delay around that bin.
    """
    triggers, a, b = _split_channels(stream)
    signals = np.sort(np.concatenate([a, b]))
    if len(triggers) == 0 or len(signals) == 0:
        raise DomainError("offset calibration needs trigger and signal tags", MODULE)
    previous = np.searchsorted(triggers, signals, side="right") - 1
    valid = previous >= 0
    delays = signals[valid] - triggers[previous[valid]]
    max_ps = int(round(max_delay_s * PS_PER_S))
    bin_ps = max(1, int(round(bin_s * PS_PER_S)))
    delays = delays[delays <= max_ps]
    if len(delays) == 0:
        raise DomainError(f"no signal tag within {max_delay_s:g} s after a trigger", MODULE)
    histogram, edges = np.histogram(delays, bins=np.arange(0, max_ps + 2 * bin_ps, bin_ps))
    mode = int(np.argmax(histogram))
    near = delays[(delays >= edges[mode] - bin_ps) & (delays < edges[mode + 1] + bin_ps)]
    offset = float(np.median(near)) / PS_PER_S
    logger.info(f"⏱️ Calibrated window offset {offset * 1e9:.3f} ns from {len(delays)} delays")
    return offset
