"""Acceleration trace analysis: moving-average detrend, RMS and spectral peak."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

G = 9.80665  # m/s^2 per G


class EmptyInputError(ValueError):
    pass


class SeriesLengthError(ValueError):
    pass


class TraceParseError(ValueError):
    def __init__(self, message: str, row: int | None = None):
        super().__init__(f"row {row}: {message}" if row is not None else message)
        self.row = row


@dataclass(frozen=True)
class TimeSeries:
    fs_hz: float
    samples: np.ndarray

    def __post_init__(self):
        if not self.fs_hz > 0:
            raise ValueError(f"sample rate must be > 0, got {self.fs_hz}")
        arr = np.asarray(self.samples, dtype=float)
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def t(self) -> np.ndarray:
        return np.arange(len(self.samples)) / self.fs_hz

    def scaled(self, k: float) -> TimeSeries:
        return TimeSeries(self.fs_hz, self.samples * k)


@dataclass(frozen=True)
class AnalysisReport:
    rms_G: float
    dominant_freq_hz: float | None
    detrended: TimeSeries
    window_s: float

    def as_dict(self) -> dict:
        return {
            "rms_G": self.rms_G,
            "dominant_freq_hz": self.dominant_freq_hz,
            "samples": len(self.detrended),
            "fs_hz": self.detrended.fs_hz,
            "window_s": self.window_s,
        }


def moving_average_detrend(x: TimeSeries, window_s: float = 0.2, mode: str = "centered") -> TimeSeries:
    """Subtract a moving average of ``round(window_s * fs)`` samples.

    ``centered`` windows shrink at the series edges so the output keeps the
    input length and has no phase lag. ``trailing`` averages the window
    ending at each sample (also truncated at the start).
    """
    n = len(x)
    if n == 0:
        raise EmptyInputError("cannot detrend an empty series")
    w = int(round(window_s * x.fs_hz))
    if w < 1:
        raise ValueError(f"window of {window_s} s is shorter than one sample at {x.fs_hz} Hz")
    v = x.samples - x.samples[0]  # offset removal keeps constants exact
    csum = np.concatenate(([0.0], np.cumsum(v)))
    i = np.arange(n)
    if mode == "centered":
        lo = np.maximum(i - (w - 1) // 2, 0)
        hi = np.minimum(i + w // 2 + 1, n)
    elif mode == "trailing":
        lo = np.maximum(i - w + 1, 0)
        hi = i + 1
    else:
        raise ValueError(f"unknown detrend mode {mode!r}")
    mean = (csum[hi] - csum[lo]) / (hi - lo)
    return TimeSeries(x.fs_hz, v - mean)


def rms(x: TimeSeries) -> float:
    if len(x) == 0:
        raise EmptyInputError("rms of an empty series")
    v = x.samples
    return math.sqrt(float(np.dot(v, v)) / len(v))


def dominant_frequency(x: TimeSeries, window: str | None = None) -> float:
    """Frequency of the largest non-DC DFT bin; ties go to the lower bin."""
    n = len(x)
    if n < 16:
        raise SeriesLengthError(f"need at least 16 samples for a spectrum, got {n}")
    v = x.samples
    if window == "hann":
        v = v * np.hanning(n)
    elif window is not None:
        raise ValueError(f"unknown window {window!r}")
    mag = np.abs(np.fft.rfft(v))
    k = 1 + int(np.argmax(mag[1:]))  # argmax returns the first of equal maxima
    return k * x.fs_hz / n


def analyze(x: TimeSeries, window_s: float = 0.2, mode: str = "centered") -> AnalysisReport:
    d = moving_average_detrend(x, window_s, mode)
    return AnalysisReport(
        rms_G=rms(d),
        dominant_freq_hz=dominant_frequency(d) if len(d) >= 16 else None,
        detrended=d,
        window_s=window_s,
    )


@dataclass(frozen=True)
class Comparison:
    rms_stim: float
    rms_base: float
    ratio: float

    def as_dict(self) -> dict:
        return {"rms_stim": self.rms_stim, "rms_base": self.rms_base, "ratio": self.ratio}


def compare_conditions(stim: TimeSeries, base: TimeSeries, window_s: float = 0.2) -> Comparison:
    rs = rms(moving_average_detrend(stim, window_s))
    rb = rms(moving_average_detrend(base, window_s))
    if rb == 0:
        ratio = math.inf if rs > 0 else 1.0
    else:
        ratio = rs / rb
    return Comparison(rs, rb, ratio)


def read_accel_csv(path: str | Path) -> TimeSeries:
    """Load ``accel_G`` against ``t_s`` from a trace CSV or a two-column log.

    The sample rate is taken from the mean time step; samples are assumed
    uniformly spaced.
    """
    t: list[float] = []
    a: list[float] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceParseError("empty file", 1) from None
        header = [h.strip() for h in header]
        if "t_s" not in header or "accel_G" not in header:
            raise TraceParseError("header must contain t_s and accel_G columns", 1)
        it, ia = header.index("t_s"), header.index("accel_G")
        for rowno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise TraceParseError(f"expected {len(header)} columns, got {len(row)}", rowno)
            try:
                t.append(float(row[it]))
                a.append(float(row[ia]))
            except ValueError as exc:
                raise TraceParseError(str(exc), rowno) from None
    if len(t) < 2:
        raise TraceParseError("need at least two samples to infer the sample rate")
    dt = (t[-1] - t[0]) / (len(t) - 1)
    if not dt > 0:
        raise TraceParseError("time column must be increasing")
    return TimeSeries(1.0 / dt, np.array(a))
