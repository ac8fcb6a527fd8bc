"""Compile stimulation patterns into frame-level switch schedules.

Two modes share one output type:

* electroadhesion: the array is split into groups A and B which take turns
  being the current source, one pulse width at a time, for a burst; then the
  array idles for a pause. One burst plus one pause is an envelope period.
* electrotactile: a single target electrode is driven against all others
  (anodic: target sources; cathodic: target sinks).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable

from estd.array import (
    ArrayGeometry,
    ElectrodeId,
    ElectrodeRole,
    Frame,
    PulseSchedule,
    linear_index,
)


class InvalidPartitionError(ValueError):
    pass


class AlignmentError(ValueError):
    """Burst does not split into whole source/ground swap cycles."""


class TimingError(ValueError):
    pass


class EmptyScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class PartitionPattern:
    """How electrodes are split into the two alternating groups.

    ``kind`` is one of ``row_alternate`` (even rows in group A),
    ``checkerboard`` (group A where row+col is even) or ``custom``
    (group A given explicitly by ``mask``).
    """

    kind: str = "row_alternate"
    mask: frozenset[ElectrodeId] = frozenset()

    KINDS = ("row_alternate", "checkerboard", "custom")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise InvalidPartitionError(f"unknown partition pattern {self.kind!r}")
        object.__setattr__(self, "mask", frozenset(self.mask))

    @classmethod
    def row_alternate(cls) -> PartitionPattern:
        return cls("row_alternate")

    @classmethod
    def checkerboard(cls) -> PartitionPattern:
        return cls("checkerboard")

    @classmethod
    def custom(cls, mask: Iterable[ElectrodeId]) -> PartitionPattern:
        return cls("custom", frozenset(mask))

    @classmethod
    def parse(cls, name: str) -> PartitionPattern:
        key = name.strip().lower().replace("-", "_")
        if key in ("row_alternate", "rows", "row"):
            return cls.row_alternate()
        if key == "checkerboard":
            return cls.checkerboard()
        raise InvalidPartitionError(f"unknown partition pattern {name!r} (custom masks need explicit electrodes)")


def partition_mask(pattern: PartitionPattern, geometry: ArrayGeometry) -> frozenset[ElectrodeId]:
    """Return group A; group B is the complement."""
    if pattern.kind == "row_alternate":
        group = frozenset(e for e in geometry.electrodes() if e.row % 2 == 0)
    elif pattern.kind == "checkerboard":
        group = frozenset(e for e in geometry.electrodes() if (e.row + e.col) % 2 == 0)
    else:
        outside = [e for e in pattern.mask if not geometry.contains(e)]
        if outside:
            raise InvalidPartitionError(f"custom mask has electrodes outside the array: {sorted(outside)[:4]}")
        group = pattern.mask
    if not group or len(group) >= geometry.size:
        raise InvalidPartitionError(
            f"group A must be a non-empty proper subset of the array (got {len(group)} of {geometry.size})"
        )
    return group


def _whole_us(value_ms: float, what: str) -> int:
    us = value_ms * 1000.0
    n = round(us)
    if abs(us - n) > 1e-6:
        raise AlignmentError(f"{what} of {value_ms} ms is not a whole number of microseconds")
    return int(n)


@dataclass(frozen=True)
class ElectroadhesionParams:
    pulse_width_us: int = 50
    burst_ms: float = 4.0
    pause_ms: float = 4.0
    current_mA: float = 10.0
    pattern: PartitionPattern = field(default_factory=PartitionPattern)
    periods: int = 1
    dead_time_us: int = 0
    pause_role: ElectrodeRole = ElectrodeRole.GROUND

    def __post_init__(self):
        if self.pulse_width_us <= 0 or int(self.pulse_width_us) != self.pulse_width_us:
            raise TimingError(f"pulse width must be a positive whole number of us, got {self.pulse_width_us}")
        if self.burst_ms <= 0 or self.pause_ms < 0:
            raise TimingError("burst must be > 0 ms and pause >= 0 ms")
        if self.current_mA < 0:
            raise ValueError("current must be >= 0 mA")
        if self.periods < 1:
            raise ValueError("periods must be >= 1")
        if self.dead_time_us < 0 or int(self.dead_time_us) != self.dead_time_us:
            raise TimingError("dead time must be a non-negative whole number of us")

    @property
    def envelope_frequency_hz(self) -> float:
        return 1000.0 / (self.burst_ms + self.pause_ms)

    @property
    def swap_cycles(self) -> int:
        """Source/ground swap cycles per burst; raises if the burst is misaligned."""
        burst_us = _whole_us(self.burst_ms, "burst")
        cycle_us = 2 * (self.pulse_width_us + self.dead_time_us)
        if burst_us % cycle_us:
            raise AlignmentError(
                f"burst {burst_us} us is not a multiple of the {cycle_us} us swap cycle"
            )
        return burst_us // cycle_us


class Polarity(enum.Enum):
    ANODIC = "anodic"
    CATHODIC = "cathodic"


@dataclass(frozen=True)
class ElectrotactileParams:
    target: ElectrodeId = ElectrodeId(3, 3)
    polarity: Polarity = Polarity.ANODIC
    pulse_width_us: int = 50
    current_mA: float = 10.0
    repetition_frequency_hz: float = 100.0
    pulses: int = 10
    biphasic: bool = False

    def __post_init__(self):
        if self.pulse_width_us <= 0 or int(self.pulse_width_us) != self.pulse_width_us:
            raise TimingError(f"pulse width must be a positive whole number of us, got {self.pulse_width_us}")
        if self.repetition_frequency_hz <= 0:
            raise TimingError("repetition frequency must be > 0")
        if self.current_mA < 0:
            raise ValueError("current must be >= 0 mA")

    @property
    def period_us(self) -> int:
        return round(1e6 / self.repetition_frequency_hz)


def _swap_frames(
    n: int, a_idx: list[int], b_idx: list[int], p: ElectroadhesionParams
) -> list[Frame]:
    a_src = Frame.from_groups(n, a_idx, b_idx, p.pulse_width_us, p.current_mA)
    b_src = Frame.from_groups(n, b_idx, a_idx, p.pulse_width_us, p.current_mA)
    if not p.dead_time_us:
        return [a_src, b_src]
    gap = Frame.uniform(n, ElectrodeRole.FLOATING, p.dead_time_us)
    return [a_src, gap, b_src, gap]


def compile_electroadhesion(
    p: ElectroadhesionParams, geometry: ArrayGeometry | None = None
) -> PulseSchedule:
    geometry = geometry or ArrayGeometry()
    group_a = partition_mask(p.pattern, geometry)
    n_cycles = p.swap_cycles
    pause_us = _whole_us(p.pause_ms, "pause")
    n = geometry.size
    a_idx = sorted(linear_index(e, geometry) for e in group_a)
    a_set = set(a_idx)
    b_idx = [i for i in range(n) if i not in a_set]

    period = _swap_frames(n, a_idx, b_idx, p) * n_cycles
    if pause_us:
        period.append(Frame.uniform(n, p.pause_role, pause_us))
    meta = {
        "mode": "electroadhesion",
        "pattern": p.pattern.kind,
        "swap_cycles_per_period": n_cycles,
        "periods": p.periods,
        "group_a_size": len(a_idx),
        "group_b_size": len(b_idx),
    }
    return PulseSchedule(
        geometry,
        tuple(period) * p.periods,
        label=f"electroadhesion {p.pattern.kind} {p.envelope_frequency_hz:g} Hz",
        meta=meta,
    )


def compile_electrotactile(
    p: ElectrotactileParams, geometry: ArrayGeometry | None = None
) -> PulseSchedule:
    geometry = geometry or ArrayGeometry()
    if p.pulses < 1:
        raise EmptyScheduleError("electrotactile schedule needs at least one pulse")
    t = linear_index(p.target, geometry)
    n = geometry.size
    others = [i for i in range(n) if i != t]
    if not others:
        raise InvalidPartitionError("electrotactile mode needs at least two electrodes")
    active_us = p.pulse_width_us * (2 if p.biphasic else 1)
    gap_us = p.period_us - active_us
    if gap_us <= 0:
        raise TimingError(
            f"pulse of {active_us} us does not fit in a {p.period_us} us repetition period"
        )

    anodic = Frame.from_groups(n, [t], others, p.pulse_width_us, p.current_mA)
    cathodic = Frame.from_groups(n, others, [t], p.pulse_width_us, p.current_mA)
    first, second = (anodic, cathodic) if p.polarity is Polarity.ANODIC else (cathodic, anodic)
    pulse = [first, second] if p.biphasic else [first]
    pulse.append(Frame.uniform(n, ElectrodeRole.GROUND, gap_us))
    meta = {"mode": "electrotactile", "polarity": p.polarity.value, "target": (p.target.row, p.target.col)}
    return PulseSchedule(
        geometry,
        tuple(pulse) * p.pulses,
        label=f"electrotactile {p.polarity.value} {p.target}",
        meta=meta,
    )


@dataclass(frozen=True)
class ScheduleStats:
    envelope_frequency_hz: float | None
    active_duty_fraction: float
    swap_cycle_count: int | None
    max_amplitude_mA: float
    total_duration_us: int
    frame_count: int
    group_sizes: tuple[int, int] | None = None

    def as_dict(self) -> dict:
        return {
            "envelope_frequency_hz": self.envelope_frequency_hz,
            "active_duty_fraction": self.active_duty_fraction,
            "swap_cycle_count": self.swap_cycle_count,
            "max_amplitude_mA": self.max_amplitude_mA,
            "total_duration_us": self.total_duration_us,
            "frame_count": self.frame_count,
            "group_sizes": self.group_sizes,
        }


def _activity_runs(s: PulseSchedule) -> list[tuple[bool, int]]:
    """Merge frames into alternating (active, duration_us) runs.

    Zero-current all-Floating frames sandwiched between active frames are
    switch dead time and count as part of the burst.
    """
    frames = s.frames
    on = [f.amplitude_mA > 0 for f in frames]
    for k in range(1, len(frames) - 1):
        if not on[k] and on[k - 1] and on[k + 1] and frames[k].count(ElectrodeRole.FLOATING) == len(frames[k].roles):
            on[k] = True
    runs: list[tuple[bool, int]] = []
    for active, fr in zip(on, frames):
        if runs and runs[-1][0] == active:
            runs[-1] = (active, runs[-1][1] + fr.duration_us)
        else:
            runs.append((active, fr.duration_us))
    return runs


def _envelope_frequency(runs: list[tuple[bool, int]]) -> float | None:
    if runs and not runs[0][0]:
        runs = runs[1:]
    on = [d for a, d in runs if a]
    off = [d for a, d in runs if not a]
    if not on or not off or len(set(on)) != 1 or len(set(off)) != 1:
        return None
    if len(off) not in (len(on), len(on) - 1):
        return None
    if len(off) == len(on) - 1 and len(on) < 2:
        return None
    return 1e6 / (on[0] + off[0])


def schedule_stats(s: PulseSchedule) -> ScheduleStats:
    total = s.total_duration_us
    active = sum(f.duration_us for f in s.frames if f.amplitude_mA > 0)
    swaps = None
    groups = None
    if s.meta.get("mode") == "electroadhesion":
        swaps = int(s.meta["swap_cycles_per_period"]) * int(s.meta["periods"])
        groups = (int(s.meta["group_a_size"]), int(s.meta["group_b_size"]))
    return ScheduleStats(
        envelope_frequency_hz=_envelope_frequency(_activity_runs(s)),
        active_duty_fraction=active / total if total else 0.0,
        swap_cycle_count=swaps,
        max_amplitude_mA=max((f.amplitude_mA for f in s.frames), default=0.0),
        total_duration_us=total,
        frame_count=len(s.frames),
        group_sizes=groups,
    )


def default_schedule(periods: int = 1) -> PulseSchedule:
    """The 125 Hz row-alternating pattern at 10 mA on the 8x8 array."""
    return compile_electroadhesion(ElectroadhesionParams(periods=periods))


__all__ = [
    "AlignmentError",
    "ElectroadhesionParams",
    "ElectrotactileParams",
    "EmptyScheduleError",
    "InvalidPartitionError",
    "PartitionPattern",
    "Polarity",
    "ScheduleStats",
    "TimingError",
    "compile_electroadhesion",
    "compile_electrotactile",
    "default_schedule",
    "partition_mask",
    "schedule_stats",
]
