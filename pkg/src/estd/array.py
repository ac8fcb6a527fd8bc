"""Electrode array geometry, switch roles and the frame/schedule timeline.

Units are fixed at the type level: microseconds for time, milliamperes for
current and millimetres for length. Conversions happen at module boundaries.
"""

from __future__ import annotations

import enum
from collections import Counter
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Iterator, Mapping


class BoundsError(IndexError):
    """Electrode address outside the array."""


@dataclass(frozen=True, order=True)
class ElectrodeId:
    row: int
    col: int

    def __str__(self) -> str:
        return f"({self.row},{self.col})"


class ElectrodeRole(enum.Enum):
    """State of one electrode's switch pair.

    A single enum value per electrode makes "upper and lower switch both
    closed" unrepresentable.
    """

    GROUND = 0    # lower switch closed
    SOURCE = 1    # upper switch closed
    FLOATING = 2  # both open


@dataclass(frozen=True)
class ArrayGeometry:
    rows: int = 8
    cols: int = 8
    electrode_diameter_mm: float = 2.0
    pitch_mm: float = 3.0
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"geometry must be at least 1x1, got {self.rows}x{self.cols}")
        if not 0 < self.electrode_diameter_mm < self.pitch_mm:
            raise ValueError("electrode diameter must be positive and smaller than the pitch")
        object.__setattr__(self, "origin", (float(self.origin[0]), float(self.origin[1])))

    @property
    def size(self) -> int:
        return self.rows * self.cols

    @property
    def electrode_radius_mm(self) -> float:
        return self.electrode_diameter_mm / 2

    @property
    def extent_mm(self) -> tuple[float, float]:
        """Overall (x, y) size of the electrode field, edge to edge."""
        return (
            (self.cols - 1) * self.pitch_mm + self.electrode_diameter_mm,
            (self.rows - 1) * self.pitch_mm + self.electrode_diameter_mm,
        )

    def contains(self, eid: ElectrodeId) -> bool:
        return 0 <= eid.row < self.rows and 0 <= eid.col < self.cols

    def electrodes(self) -> Iterator[ElectrodeId]:
        """All electrodes in row-major (linear index) order."""
        for r in range(self.rows):
            for c in range(self.cols):
                yield ElectrodeId(r, c)

    def same_shape(self, other: ArrayGeometry) -> bool:
        return (self.rows, self.cols) == (other.rows, other.cols)


def _check(eid: ElectrodeId, geometry: ArrayGeometry) -> None:
    if not geometry.contains(eid):
        raise BoundsError(f"electrode {eid} outside {geometry.rows}x{geometry.cols} array")


def linear_index(eid: ElectrodeId, geometry: ArrayGeometry) -> int:
    _check(eid, geometry)
    return eid.row * geometry.cols + eid.col


def from_linear_index(index: int, geometry: ArrayGeometry) -> ElectrodeId:
    if not 0 <= index < geometry.size:
        raise BoundsError(f"linear index {index} outside [0, {geometry.size})")
    return ElectrodeId(*divmod(index, geometry.cols))


def electrode_center(eid: ElectrodeId, geometry: ArrayGeometry) -> tuple[float, float]:
    """Centre of an electrode in mm; x follows columns, y follows rows."""
    _check(eid, geometry)
    ox, oy = geometry.origin
    return (ox + eid.col * geometry.pitch_mm, oy + eid.row * geometry.pitch_mm)


@dataclass(frozen=True)
class Frame:
    """One constant-configuration interval of the switch matrix.

    ``roles`` is indexed by linear electrode index (row-major).
    """

    duration_us: int
    amplitude_mA: float
    roles: tuple[ElectrodeRole, ...]

    def __post_init__(self):
        if int(self.duration_us) != self.duration_us or self.duration_us <= 0:
            raise ValueError(f"frame duration must be a positive whole number of us, got {self.duration_us}")
        object.__setattr__(self, "duration_us", int(self.duration_us))
        if not self.amplitude_mA >= 0:
            raise ValueError(f"amplitude must be >= 0 mA, got {self.amplitude_mA}")
        roles = tuple(self.roles)
        if not all(isinstance(r, ElectrodeRole) for r in roles):
            raise TypeError("roles must be ElectrodeRole values")
        object.__setattr__(self, "roles", roles)

    @classmethod
    def uniform(cls, n: int, role: ElectrodeRole, duration_us: int, amplitude_mA: float = 0.0) -> Frame:
        return cls(duration_us, amplitude_mA, (role,) * n)

    @classmethod
    def from_groups(
        cls,
        n: int,
        sources: Iterable[int],
        grounds: Iterable[int],
        duration_us: int,
        amplitude_mA: float,
        rest: ElectrodeRole = ElectrodeRole.FLOATING,
    ) -> Frame:
        roles = [rest] * n
        for i in grounds:
            roles[i] = ElectrodeRole.GROUND
        for i in sources:
            roles[i] = ElectrodeRole.SOURCE
        return cls(duration_us, amplitude_mA, tuple(roles))

    @property
    def is_pause(self) -> bool:
        return self.amplitude_mA == 0

    def count(self, role: ElectrodeRole) -> int:
        return sum(1 for r in self.roles if r is role)

    def indices(self, role: ElectrodeRole) -> list[int]:
        return [i for i, r in enumerate(self.roles) if r is role]

    def has_current_path(self) -> bool:
        return ElectrodeRole.SOURCE in self.roles and ElectrodeRole.GROUND in self.roles

    def role_of(self, eid: ElectrodeId, geometry: ArrayGeometry) -> ElectrodeRole:
        return self.roles[linear_index(eid, geometry)]

    def role_counts(self) -> Counter:
        return Counter(self.roles)


@dataclass(frozen=True)
class PulseSchedule:
    """Ordered frames for one geometry.

    Equality covers geometry and frames only; ``label`` and ``meta`` are
    descriptive and do not survive the wire format.
    """

    geometry: ArrayGeometry
    frames: tuple[Frame, ...]
    label: str = field(default="", compare=False)
    meta: Mapping[str, object] = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        frames = tuple(self.frames)
        for k, fr in enumerate(frames):
            if len(fr.roles) != self.geometry.size:
                raise ValueError(
                    f"frame {k} has {len(fr.roles)} roles, geometry needs {self.geometry.size}"
                )
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "meta", MappingProxyType(dict(self.meta)))

    def __len__(self) -> int:
        return len(self.frames)

    def __iter__(self) -> Iterator[Frame]:
        return iter(self.frames)

    @property
    def total_duration_us(self) -> int:
        return schedule_total_duration(self)

    def open_circuit_frames(self) -> list[int]:
        """Indices of frames commanding current without a Source/Ground path."""
        return [k for k, fr in enumerate(self.frames) if fr.amplitude_mA > 0 and not fr.has_current_path()]

    def concat(self, other: PulseSchedule, label: str | None = None) -> PulseSchedule:
        if self.geometry != other.geometry:
            raise ValueError("cannot concatenate schedules with different geometry")
        return PulseSchedule(self.geometry, self.frames + other.frames, label if label is not None else self.label)

    def scaled(self, k: float) -> PulseSchedule:
        """Copy with every frame amplitude multiplied by ``k``."""
        frames = tuple(Frame(f.duration_us, f.amplitude_mA * k, f.roles) for f in self.frames)
        return PulseSchedule(self.geometry, frames, self.label, self.meta)


def schedule_total_duration(s: PulseSchedule) -> int:
    return sum(f.duration_us for f in s.frames)
