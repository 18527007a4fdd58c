"""Time-tag data model and coincidence analytics.

Timestamps are signed 64-bit integer picoseconds since session start. All
operations here are pure functions on immutable inputs and are safe to call
concurrently on shared streams.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum

import numpy as np

from .errors import NoPeakError

PS_PER_SECOND = 1_000_000_000_000


class Party(IntEnum):
    ALICE = 0
    BOB = 1


class Basis(IntEnum):
    TIME = 0
    FREQ = 1


class Channel(IntEnum):
    """The four detector channels: time/frequency basis at Alice/Bob."""

    T1 = 0
    F1 = 1
    T2 = 2
    F2 = 3

    @property
    def party(self) -> Party:
        return Party.ALICE if self in (Channel.T1, Channel.F1) else Party.BOB

    @property
    def basis(self) -> Basis:
        return Basis.TIME if self in (Channel.T1, Channel.T2) else Basis.FREQ


@dataclass(frozen=True)
class TimeTag:
    """A single detection event.

    ``pair_id``/``detuning``/``emit_time`` carry the simulator's ground-truth
    annotation and are None for real or dark-count events.
    """

    timestamp: int
    channel: Channel
    pair_id: int | None = None
    detuning: float | None = None
    emit_time: int | None = None

    @property
    def has_truth(self) -> bool:
        return self.pair_id is not None


@dataclass
class TagStream:
    """A sorted sequence of detection events on one channel.

    ``times`` is an int64 array of picosecond timestamps, strictly sorted
    (ties allowed). The truth arrays are either None or full-length, with
    pair_id == -1 marking tags without annotation (dark counts).

    A stream produced by :func:`merge_sorted` may span several channels; it
    then has ``channel is None`` and a per-tag ``channels`` code array.
    """

    times: np.ndarray
    channel: Channel | None
    duration_ps: int
    channels: np.ndarray | None = None
    pair_ids: np.ndarray | None = None
    detunings: np.ndarray | None = None
    emit_times: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.int64)
        if self.times.size and np.any(np.diff(self.times) < 0):
            raise ValueError("tag timestamps must be sorted")
        if self.times.size and self.times[0] < 0:
            raise ValueError("timestamps must be >= 0 within a session")
        if self.channel is None and self.channels is None and self.times.size:
            raise ValueError("stream needs a channel or per-tag channel codes")

    def __len__(self) -> int:
        return int(self.times.size)

    def __getitem__(self, i: int) -> TimeTag:
        ch = self.channel if self.channel is not None else Channel(int(self.channels[i]))
        if self.pair_ids is not None and self.pair_ids[i] >= 0:
            return TimeTag(int(self.times[i]), ch, int(self.pair_ids[i]),
                           float(self.detunings[i]), int(self.emit_times[i]))
        return TimeTag(int(self.times[i]), ch)

    @property
    def party(self) -> Party | None:
        return self.channel.party if self.channel is not None else None

    @property
    def basis(self) -> Basis | None:
        return self.channel.basis if self.channel is not None else None

    @property
    def duration_s(self) -> float:
        return self.duration_ps / PS_PER_SECOND

    @property
    def rate_hz(self) -> float:
        return len(self) / self.duration_s if self.duration_ps else 0.0

    def has_truth(self) -> bool:
        return self.pair_ids is not None

    def select(self, mask: np.ndarray) -> "TagStream":
        """New stream containing the masked subset of tags."""
        return TagStream(
            self.times[mask], self.channel, self.duration_ps,
            channels=None if self.channels is None else self.channels[mask],
            pair_ids=None if self.pair_ids is None else self.pair_ids[mask],
            detunings=None if self.detunings is None else self.detunings[mask],
            emit_times=None if self.emit_times is None else self.emit_times[mask],
        )

    def shifted(self, offset_ps: int) -> "TagStream":
        """New stream with all timestamps shifted by ``offset_ps``."""
        return TagStream(
            self.times + int(offset_ps), self.channel, self.duration_ps,
            channels=self.channels, pair_ids=self.pair_ids,
            detunings=self.detunings, emit_times=self.emit_times,
        )


@dataclass(frozen=True)
class CoincidenceHistogram:
    """Histogram of time differences t_b - t_a between two streams."""

    bin_width: int
    offset_min: int
    offset_max: int
    counts: np.ndarray
    acquisition_time_s: float

    def __post_init__(self):
        span = self.offset_max - self.offset_min
        if span <= 0 or span % self.bin_width != 0:
            raise ValueError("offset range must divide evenly into bins")
        if len(self.counts) != span // self.bin_width:
            raise ValueError("counts length does not match bin layout")

    @property
    def n_bins(self) -> int:
        return len(self.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def bin_centers(self) -> np.ndarray:
        return (self.offset_min + self.bin_width * (np.arange(self.n_bins) + 0.5))

    def rebinned(self, factor: int) -> "CoincidenceHistogram":
        """Coarsen by an integer factor (bin count must divide)."""
        if self.n_bins % factor != 0:
            raise ValueError("bin count not divisible by factor")
        c = self.counts.reshape(-1, factor).sum(axis=1)
        return CoincidenceHistogram(self.bin_width * factor, self.offset_min,
                                    self.offset_max, c, self.acquisition_time_s)


@dataclass(frozen=True)
class EffectiveRates:
    """Peak-bin coincidence rate and coincidence-to-accidental ratio."""

    effective_coincidence_rate_hz: float
    effective_car: float
    peak_bin_offset: int
    accidental_rate_hz: float
    fwhm_ps: float


def merge_sorted(streams: list[TagStream]) -> TagStream:
    """Merge individually sorted streams into one sorted stream.

    Stable for ties: tags from earlier streams precede later ones. All
    streams must belong to the same party (or carry no party metadata).
    """
    parties = {s.party for s in streams if s.party is not None}
    if len(parties) > 1:
        raise ValueError("cannot merge streams from different parties")
    if not streams:
        return TagStream(np.empty(0, np.int64), None, 0, channels=np.empty(0, np.uint8))

    times = np.concatenate([s.times for s in streams])
    chans = np.concatenate([
        np.full(len(s), s.channel, np.uint8) if s.channels is None else s.channels
        for s in streams
    ])
    order = np.argsort(times, kind="stable")
    duration = max(s.duration_ps for s in streams)
    channels = {int(c) for c in np.unique(chans)} if len(chans) else set()
    single = Channel(channels.pop()) if len(channels) == 1 else None

    truth = None
    if all(s.has_truth() for s in streams) and streams:
        truth = dict(
            pair_ids=np.concatenate([s.pair_ids for s in streams])[order],
            detunings=np.concatenate([s.detunings for s in streams])[order],
            emit_times=np.concatenate([s.emit_times for s in streams])[order],
        )
    return TagStream(times[order], single, duration,
                     channels=None if single is not None else chans[order],
                     **(truth or {}))


def find_coincidences(a: TagStream, b: TagStream, window_halfwidth: int,
                      center_offset: int = 0) -> list[tuple[int, int]]:
    """Greedy earliest-unmatched-first pairing of two sorted streams.

    Returns index pairs (i, j) with |(t_b[j] - t_a[i]) - center_offset| <=
    window_halfwidth; each tag is used at most once. The result is symmetric
    under swapping streams with a negated center offset.
    """
    if window_halfwidth <= 0:
        raise ValueError("window_halfwidth must be > 0")
    ta = a.times
    tb = b.times
    pairs: list[tuple[int, int]] = []
    i = j = 0
    while i < len(ta) and j < len(tb):
        d = int(tb[j]) - int(ta[i]) - center_offset
        if d < -window_halfwidth:
            j += 1
        elif d > window_halfwidth:
            i += 1
        else:
            pairs.append((i, j))
            i += 1
            j += 1
    return pairs


def coincidence_histogram(a: TagStream, b: TagStream, bin_width: int,
                          offset_range: tuple[int, int],
                          acquisition_time_s: float | None = None) -> CoincidenceHistogram:
    """Histogram every (i, j) pair with t_b - t_a inside ``offset_range``.

    A sliding-window sweep: pairs are counted, not exclusively matched, so a
    tag may appear in several pairs. The range must divide evenly by
    ``bin_width``.
    """
    lo, hi = offset_range
    span = hi - lo
    if span <= 0 or span % bin_width != 0:
        raise ValueError("offset range must divide evenly by bin_width")
    n_bins = span // bin_width
    counts = np.zeros(n_bins, dtype=np.int64)

    ta = a.times
    tb = b.times
    if len(ta) and len(tb):
        # window [t_a + lo, t_a + hi) per a-tag; vectorized expansion
        left = np.searchsorted(tb, ta + lo, side="left")
        right = np.searchsorted(tb, ta + hi, side="left")
        lens = right - left
        tot = int(lens.sum())
        if tot:
            a_idx = np.repeat(np.arange(len(ta)), lens)
            # ragged range construction: cumulative offsets trick
            starts = np.repeat(left, lens)
            within = np.arange(tot) - np.repeat(np.cumsum(lens) - lens, lens)
            b_idx = starts + within
            offs = tb[b_idx] - ta[a_idx]
            np.add.at(counts, (offs - lo) // bin_width, 1)

    if acquisition_time_s is None:
        acquisition_time_s = max(a.duration_s, b.duration_s)
    return CoincidenceHistogram(bin_width, lo, hi, counts, acquisition_time_s)


def _peak_floor(h: CoincidenceHistogram) -> tuple[int, float, np.ndarray]:
    """Locate the maximum bin and estimate the accidental floor.

    The floor is the mean of bins outside +/-3x a first-pass width estimate
    around the peak (first pass: crossings of half the raw maximum).
    """
    counts = h.counts.astype(float)
    peak = int(np.argmax(counts))
    half = counts[peak] / 2.0
    left = peak
    while left > 0 and counts[left - 1] >= half:
        left -= 1
    right = peak
    while right < h.n_bins - 1 and counts[right + 1] >= half:
        right += 1
    first_width = max(right - left + 1, 1)
    excl = 3 * first_width
    mask = np.ones(h.n_bins, bool)
    mask[max(0, peak - excl):peak + excl + 1] = False
    # a "peak" spanning the whole histogram leaves no floor bins; fall back
    # to the median so flat histograms are rejected downstream
    floor = float(counts[mask].mean()) if mask.any() else float(np.median(counts))
    return peak, floor, mask


def fwhm(h: CoincidenceHistogram) -> float:
    """Full width at half maximum of the histogram peak, in ps.

    Linear interpolation between adjacent bin centers locates the two
    half-maximum crossings; the accidental floor is subtracted first.
    Raises NoPeakError when the maximum is below 5x the floor.
    """
    counts = h.counts.astype(float)
    peak, floor, _ = _peak_floor(h)
    if counts[peak] <= 0 or (floor > 0 and counts[peak] < 5.0 * floor):
        raise NoPeakError("histogram has no peak above the accidental floor")
    half = floor + (counts[peak] - floor) / 2.0

    def cross(direction: int) -> float:
        k = peak
        while 0 <= k + direction < h.n_bins and counts[k + direction] >= half:
            k += direction
        nxt = k + direction
        if not (0 <= nxt < h.n_bins):
            return float(k)  # clipped at histogram edge
        c0, c1 = counts[k], counts[nxt]
        frac = (c0 - half) / (c0 - c1) if c0 != c1 else 0.5
        return k + direction * frac

    width_bins = cross(+1) - cross(-1)
    return float(width_bins * h.bin_width)


def effective_rates(h: CoincidenceHistogram) -> EffectiveRates:
    """Peak-bin coincidence rate and effective CAR.

    The effective rate is the maximum-bin count divided by acquisition time.
    The CAR divides it by the mean accidental rate of bins outside the peak
    region (+/-3x FWHM around the peak). A zero accidental floor reports CAR
    as +inf.
    """
    width = fwhm(h)  # raises NoPeakError on flat input
    counts = h.counts.astype(float)
    peak = int(np.argmax(counts))
    excl_bins = max(int(math.ceil(3.0 * width / h.bin_width)), 1)
    mask = np.ones(h.n_bins, bool)
    mask[max(0, peak - excl_bins):peak + excl_bins + 1] = False
    floor = float(counts[mask].mean()) if mask.any() else 0.0

    t = h.acquisition_time_s
    rate = counts[peak] / t
    acc_rate = floor / t
    car = rate / acc_rate if floor > 0 else math.inf
    offset = int(h.offset_min + h.bin_width * peak + h.bin_width // 2)
    return EffectiveRates(rate, car, offset, acc_rate, width)
