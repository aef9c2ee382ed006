"""Channel derivation and windowing for load-cell streams.

A raw stream is the kilogram load sampled at a fixed rate by a single
leg-mounted cell. From it we derive the four channels used downstream:

* load       — the raw series itself
* vibration  — zero-phase band-passed load (default 0.5-10 Hz)
* occupancy  — adaptive-threshold bed occupancy, {0,1}
* in-bed duration — minutes since the current occupancy run began

plus fixed-length look-back windows, the unit of classification.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import butter, sosfiltfilt

from .errors import DataError

TIMESTAMP_TOL_S = 1e-6

# Occupancy detector knobs (see detect_occupancy).
CALIBRATION_HORIZON_S = 1800.0
MIN_BIMODAL_RANGE_KG = 2.0
MIN_CLUSTER_SEPARATION_KG = 30.0
HYSTERESIS_FRACTION = 0.10
MIN_DWELL_S = 5.0
THRESHOLD_UPDATE_S = 1.0
MAX_CALIBRATION_SAMPLES = 512

LABEL_TRANSITION = "transition"
LABEL_NON_ACTIVE = "non_active"
LABEL_TO_CLASS = {LABEL_TRANSITION: 1, LABEL_NON_ACTIVE: 0}


@dataclass(frozen=True)
class RawStream:
    """Uniformly sampled load record: timestamps in seconds, load in kg."""

    sample_rate_hz: float
    timestamps: np.ndarray
    load: np.ndarray

    def validate(self) -> "RawStream":
        if self.sample_rate_hz <= 0:
            raise DataError("sample_rate_hz must be positive")
        t = np.asarray(self.timestamps, dtype=float)
        x = np.asarray(self.load, dtype=float)
        if t.shape != x.shape or t.ndim != 1:
            raise DataError("timestamps and load must be 1-D and equally long")
        if not np.all(np.isfinite(x)):
            raise DataError("load values must be finite")
        if np.any(x < 0):
            raise DataError("load values must be non-negative")
        if len(t) >= 2:
            dt = np.diff(t)
            if np.any(dt <= 0):
                raise DataError("timestamps must be strictly increasing")
            if np.any(np.abs(dt - 1.0 / self.sample_rate_hz) > TIMESTAMP_TOL_S):
                raise DataError(
                    "timestamps are not uniform at the declared sample rate"
                )
        return self

    @property
    def duration_s(self) -> float:
        return len(self.load) / self.sample_rate_hz


@dataclass(frozen=True)
class SignalFrame:
    """The four time-aligned channels at a fixed sample rate."""

    sample_rate_hz: float
    load: np.ndarray
    vibration: np.ndarray
    occupancy: np.ndarray
    in_bed_duration: np.ndarray  # minutes

    def validate(self) -> "SignalFrame":
        n = len(self.load)
        for name in ("vibration", "occupancy", "in_bed_duration"):
            if len(getattr(self, name)) != n:
                raise DataError(f"channel length mismatch: {name}")
        occ = self.occupancy
        if not np.all((occ == 0) | (occ == 1)):
            raise DataError("occupancy must be binary")
        dur = self.in_bed_duration
        if np.any(dur < 0):
            raise DataError("in-bed duration must be non-negative")
        if np.any((occ == 0) & (dur != 0)):
            raise DataError("in-bed duration must be zero while unoccupied")
        # non-decreasing inside each occupancy run
        inside = (occ[1:] == 1) & (occ[:-1] == 1)
        if np.any(inside & (np.diff(dur) < 0)):
            raise DataError("in-bed duration must be non-decreasing within a run")
        return self

    def __len__(self) -> int:
        return len(self.load)

    def channel_stack(self) -> np.ndarray:
        """(4, n) array ordered load, vibration, occupancy, duration."""
        return np.stack(
            [self.load, self.vibration, self.occupancy.astype(float), self.in_bed_duration]
        )


@dataclass(frozen=True)
class WindowSpec:
    """Look-back length and stride, both in seconds."""

    lookback_s: float = 10800.0
    stride_s: float = 1800.0

    def validate(self, sample_rate_hz: float) -> "WindowSpec":
        if self.lookback_s <= 0 or self.stride_s <= 0:
            raise DataError("lookback_s and stride_s must be positive")
        n = self.lookback_s * sample_rate_hz
        if abs(n - round(n)) > 1e-6:
            raise DataError("lookback_s must be an integer number of samples")
        return self

    def lookback_samples(self, sample_rate_hz: float) -> int:
        return int(round(self.lookback_s * sample_rate_hz))


@dataclass(frozen=True)
class Window:
    """One look-back slice; `channels` is (4, L) ordered like channel_stack."""

    channels: np.ndarray
    t_end: float
    sample_rate_hz: float
    label: int | None = None
    padded: bool = False

    @property
    def load(self) -> np.ndarray:
        return self.channels[0]


def bandpass_vibration(
    load: np.ndarray,
    sample_rate_hz: float,
    low_hz: float = 0.5,
    high_hz: float = 10.0,
) -> np.ndarray:
    """Zero-phase band-pass of the load series.

    Second-order Butterworth discretized by the bilinear transform and applied
    forward-backward (zero phase, squared magnitude response). The band edges
    sit at -6 dB after the two passes; the geometric mid-band gain stays
    within 1 dB of unity.
    """
    x = np.asarray(load, dtype=float)
    if x.ndim != 1 or len(x) < 8:
        raise DataError("band-pass input must be 1-D with at least 8 samples")
    if not np.all(np.isfinite(x)):
        raise DataError("band-pass input must be finite")
    nyquist = sample_rate_hz / 2.0
    if not (0.0 < low_hz < high_hz < nyquist):
        raise DataError("band edges must satisfy 0 < low < high < Nyquist")
    sos = butter(2, [low_hz, high_hz], btype="bandpass", fs=sample_rate_hz, output="sos")
    padlen = min(3 * (2 * sos.shape[0] + 1), len(x) - 1)
    return sosfiltfilt(sos, x, padlen=padlen)


def _two_means(values: np.ndarray) -> tuple[float, float]:
    """Deterministic 1-D two-cluster split (Lloyd, min/max init)."""
    c_lo = float(values.min())
    c_hi = float(values.max())
    for _ in range(16):
        mid = 0.5 * (c_lo + c_hi)
        lower = values[values <= mid]
        upper = values[values > mid]
        if len(upper) == 0:  # all mass at the midpoint; no split
            break
        n_lo = float(lower.mean())
        n_hi = float(upper.mean())
        if n_lo == c_lo and n_hi == c_hi:
            break
        c_lo, c_hi = n_lo, n_hi
    return c_lo, c_hi


def _suppress_short_runs(state: np.ndarray, min_len: int) -> np.ndarray:
    """Merge interior runs shorter than min_len into the preceding state.

    The final run is kept as-is even when short: at stream end we cannot yet
    know whether it will persist.
    """
    n = len(state)
    change = np.flatnonzero(np.diff(state)) + 1
    bounds = np.concatenate(([0], change, [n]))
    out = state.copy()
    current = state[0]
    for k in range(len(bounds) - 1):
        s, e = int(bounds[k]), int(bounds[k + 1])
        if k == 0:
            continue
        last = k == len(bounds) - 2
        if (e - s) < min_len and not last:
            out[s:e] = current
        else:
            current = state[s]
    return out


def detect_occupancy(load: np.ndarray, sample_rate_hz: float) -> np.ndarray:
    """Adaptive-threshold bed occupancy from the load series.

    The threshold is the midpoint of a two-cluster split of load values over a
    trailing 30-minute calibration horizon, recomputed every second on at most
    MAX_CALIBRATION_SAMPLES subsamples (the newest sample is always included).
    A Schmitt band of +/-10% of the cluster distance plus a 5 s minimum dwell
    suppress single-sample flips. The previous state is held (0 before any
    decision) whenever the horizon shows no genuine empty/occupied
    bimodality: range under 2 kg, or cluster centers closer than 30 kg. The
    separation hold keeps body movement (repositioning bumps, pre-exit
    rocking and drift) from being mistaken for an entry/exit step, which is
    never smaller than an adult body weight.
    """
    x = np.asarray(load, dtype=float)
    n = len(x)
    if n < int(60 * sample_rate_hz):
        raise DataError("occupancy detection needs at least 60 s of samples")
    update = max(1, int(round(THRESHOLD_UPDATE_S * sample_rate_hz)))
    horizon = max(1, int(round(CALIBRATION_HORIZON_S * sample_rate_hz)))

    thr = np.full(n, np.nan)
    band = np.zeros(n)
    for u in range(0, n, update):
        lo = max(0, u - horizon + 1)
        buf = x[lo : u + 1]
        stride = max(1, int(np.ceil(len(buf) / MAX_CALIBRATION_SAMPLES)))
        sub = buf[::-stride]  # newest-first subsample, always includes x[u]
        if sub.max() - sub.min() < MIN_BIMODAL_RANGE_KG:
            continue  # hold: thr stays NaN for this block
        c_lo, c_hi = _two_means(sub)
        if c_hi - c_lo < MIN_CLUSTER_SEPARATION_KG:
            continue  # in-bed movement, not an empty/occupied step: hold
        hi = min(u + update, n)
        thr[u:hi] = 0.5 * (c_lo + c_hi)
        band[u:hi] = HYSTERESIS_FRACTION * (c_hi - c_lo)

    with np.errstate(invalid="ignore"):
        events = np.where(x > thr + band, 1, np.where(x < thr - band, -1, 0))
    events = events.astype(np.int8)

    # carry the most recent nonzero event forward; default state 0
    idx = np.arange(n)
    marked = np.where(events != 0, idx, -1)
    last = np.maximum.accumulate(marked)
    state = np.where(last >= 0, events[np.maximum(last, 0)] > 0, False)
    state = state.astype(np.int8)

    dwell = max(1, int(round(MIN_DWELL_S * sample_rate_hz)))
    return _suppress_short_runs(state, dwell)


def in_bed_duration(occupancy: np.ndarray, sample_rate_hz: float) -> np.ndarray:
    """Minutes since the current occupancy run began; 0 while unoccupied.

    The first sample of a run counts as 0 minutes.
    """
    occ = np.asarray(occupancy)
    if not np.all((occ == 0) | (occ == 1)):
        raise DataError("occupancy input must be binary")
    n = len(occ)
    idx = np.arange(n)
    last_zero = np.maximum.accumulate(np.where(occ == 0, idx, -1))
    minutes = (idx - last_zero - 1) / sample_rate_hz / 60.0
    return np.where(occ == 1, minutes, 0.0)


def derive_frame(raw: RawStream) -> SignalFrame:
    """Compose the four channels from a validated raw stream."""
    raw.validate()
    load = np.asarray(raw.load, dtype=float)
    vibration = bandpass_vibration(load, raw.sample_rate_hz)
    occupancy = detect_occupancy(load, raw.sample_rate_hz)
    duration = in_bed_duration(occupancy, raw.sample_rate_hz)
    return SignalFrame(
        sample_rate_hz=raw.sample_rate_hz,
        load=load,
        vibration=vibration,
        occupancy=occupancy,
        in_bed_duration=duration,
    ).validate()


def label_at(intervals: list[tuple[float, float, str]], t: float) -> str | None:
    """Name of the interval containing t (start <= t <= end), else None."""
    for start, end, name in intervals:
        if start <= t <= end:
            return name
    return None


def extract_window_at(frame: SignalFrame, spec: WindowSpec, t_end: float,
                      label: int | None = None) -> Window:
    """Slice the look-back window ending at t_end.

    Windows that would begin before the stream start are left-padded with the
    first observed value of each channel and flagged.
    """
    fs = frame.sample_rate_hz
    length = spec.lookback_samples(fs)
    end_idx = int(round(t_end * fs))  # exclusive
    if end_idx < 1 or end_idx > len(frame):
        raise DataError(f"t_end {t_end} outside the frame")
    start_idx = end_idx - length
    stack = frame.channel_stack()
    if start_idx >= 0:
        channels = stack[:, start_idx:end_idx].copy()
        padded = False
    else:
        pad = np.repeat(stack[:, :1], -start_idx, axis=1)
        channels = np.concatenate([pad, stack[:, :end_idx]], axis=1)
        padded = True
    return Window(channels=channels, t_end=t_end, sample_rate_hz=fs,
                  label=label, padded=padded)


def extract_windows(
    frame: SignalFrame,
    spec: WindowSpec,
    label_intervals: list[tuple[float, float, str]],
) -> list[Window]:
    """One window per stride step whose t_end falls inside a labeled interval.

    Only `transition` and `non_active` intervals produce windows; stride steps
    landing elsewhere are skipped.
    """
    spec.validate(frame.sample_rate_hz)
    fs = frame.sample_rate_hz
    duration = len(frame) / fs
    windows: list[Window] = []
    k = 1
    while True:
        t_end = k * spec.stride_s
        if int(round(t_end * fs)) > len(frame):
            break
        name = label_at(label_intervals, t_end)
        if name in LABEL_TO_CLASS:
            windows.append(
                extract_window_at(frame, spec, t_end, label=LABEL_TO_CLASS[name])
            )
        k += 1
        if t_end > duration:  # safety; loop already bounded by sample count
            break
    return windows
