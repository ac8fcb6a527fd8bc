"""Binary ``EST1`` schedule packets and a mock stimulator.

Packet layout, all integers little-endian::

    offset  size  field
    0       4     magic b"EST1"
    4       1     version (1)
    5       1     rows
    6       1     cols
    7       4     frame_count
    11      3     reserved, zero
    14      ...   frames
    end-4   4     CRC-32 (IEEE, as zlib.crc32) of every preceding byte

Each frame is ``duration_us`` u32, ``amplitude_uA`` u32 and a role bitmap of
2 bits per electrode in row-major order, four electrodes per byte starting at
the least significant bits: 00 Ground, 01 Source, 10 Floating, 11 invalid.
The bitmap is zero-padded to a whole byte.
"""

from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass, field

from estd.array import ArrayGeometry, ElectrodeRole, Frame, PulseSchedule
from estd.sim import SimTrace, simulate

MAGIC = b"EST1"
VERSION = 1
HEADER = struct.Struct("<4sBBBI3s")
FRAME_HEAD = struct.Struct("<II")
CRC = struct.Struct("<I")
U32_MAX = 0xFFFF_FFFF

_CODE = {ElectrodeRole.GROUND: 0b00, ElectrodeRole.SOURCE: 0b01, ElectrodeRole.FLOATING: 0b10}
_ROLE = {v: k for k, v in _CODE.items()}


class ProtocolError(ValueError):
    pass


class FormatError(ProtocolError):
    pass


class IntegrityError(ProtocolError):
    pass


class PacketLengthError(ProtocolError):
    pass


class InvalidRoleError(ProtocolError):
    pass


class RangeError(ProtocolError):
    pass


def bitmap_bytes(n_electrodes: int) -> int:
    return (n_electrodes + 3) // 4


def packet_length(rows: int, cols: int, frame_count: int) -> int:
    return HEADER.size + frame_count * (FRAME_HEAD.size + bitmap_bytes(rows * cols)) + CRC.size


def amplitude_to_uA(amplitude_mA: float) -> int:
    """mA to whole uA, rounding halves up."""
    return math.floor(amplitude_mA * 1000 + 0.5)


def _pack_roles(roles: tuple[ElectrodeRole, ...]) -> bytes:
    out = bytearray(bitmap_bytes(len(roles)))
    for i, r in enumerate(roles):
        out[i >> 2] |= _CODE[r] << ((i & 3) * 2)
    return bytes(out)


def encode_schedule(s: PulseSchedule) -> bytes:
    g = s.geometry
    if g.rows > 255 or g.cols > 255:
        raise RangeError(f"geometry {g.rows}x{g.cols} exceeds 255x255")
    if len(s.frames) > U32_MAX:
        raise RangeError("too many frames")
    parts = [HEADER.pack(MAGIC, VERSION, g.rows, g.cols, len(s.frames), b"\0\0\0")]
    for k, fr in enumerate(s.frames):
        ua = amplitude_to_uA(fr.amplitude_mA)
        if fr.duration_us > U32_MAX or ua > U32_MAX:
            raise RangeError(f"frame {k} duration or amplitude does not fit in u32")
        parts.append(FRAME_HEAD.pack(fr.duration_us, ua))
        parts.append(_pack_roles(fr.roles))
    body = b"".join(parts)
    return body + CRC.pack(zlib.crc32(body))


def decode_schedule(packet: bytes, geometry: ArrayGeometry | None = None) -> PulseSchedule:
    """Parse and validate a packet.

    Only rows and cols travel on the wire; electrode size, pitch and origin
    come from ``geometry`` (default electrode size and pitch when omitted), whose shape must
    match the packet.
    """
    data = bytes(packet)
    if len(data) < HEADER.size + CRC.size:
        if len(data) >= 4 and data[:4] != MAGIC:
            raise FormatError("bad magic")
        raise PacketLengthError(f"packet of {len(data)} bytes is shorter than header and CRC")
    magic, version, rows, cols, count, reserved = HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}")
    if reserved != b"\0\0\0":
        raise FormatError("reserved header bytes must be zero")
    if rows == 0 or cols == 0:
        raise FormatError("geometry must be at least 1x1")
    expected = packet_length(rows, cols, count)
    if len(data) != expected:
        raise PacketLengthError(f"packet is {len(data)} bytes, header implies {expected}")
    (crc,) = CRC.unpack_from(data, len(data) - CRC.size)
    if zlib.crc32(data[: -CRC.size]) != crc:
        raise IntegrityError("CRC mismatch")

    if geometry is None:
        geometry = ArrayGeometry(rows, cols)
    elif (geometry.rows, geometry.cols) != (rows, cols):
        raise FormatError(f"packet is {rows}x{cols}, expected {geometry.rows}x{geometry.cols}")
    n = rows * cols
    nb = bitmap_bytes(n)
    frames = []
    off = HEADER.size
    for k in range(count):
        dur, ua = FRAME_HEAD.unpack_from(data, off)
        off += FRAME_HEAD.size
        bitmap = data[off : off + nb]
        off += nb
        roles = []
        for i in range(n):
            code = (bitmap[i >> 2] >> ((i & 3) * 2)) & 0b11
            if code == 0b11:
                raise InvalidRoleError(f"frame {k} electrode {i} has reserved role bits 11")
            roles.append(_ROLE[code])
        if n & 3 and bitmap[-1] >> ((n & 3) * 2):
            raise FormatError(f"frame {k} has non-zero bitmap padding")
        if dur == 0:
            raise FormatError(f"frame {k} has zero duration")
        frames.append(Frame(dur, ua / 1000, tuple(roles)))
    return PulseSchedule(geometry, tuple(frames))


@dataclass(frozen=True)
class DeviceProfile:
    min_frame_us: int = 10
    max_amplitude_uA: int = 20_000
    rows: int = 8
    cols: int = 8

    def __post_init__(self):
        if min(self.min_frame_us, self.max_amplitude_uA, self.rows, self.cols) <= 0:
            raise ValueError("device profile values must be > 0")


@dataclass(frozen=True)
class Issue:
    kind: str
    frame_index: int | None
    detail: str

    def __str__(self) -> str:
        where = f"frame {self.frame_index}: " if self.frame_index is not None else ""
        return f"{self.kind}: {where}{self.detail}"


@dataclass(frozen=True)
class FeasibilityReport:
    feasible: bool
    issues: list[Issue] = field(default_factory=list)


def validate_for_device(s: PulseSchedule, d: DeviceProfile | None = None) -> FeasibilityReport:
    d = d or DeviceProfile()
    issues = []
    if (s.geometry.rows, s.geometry.cols) != (d.rows, d.cols):
        issues.append(Issue("geometry", None, f"schedule is {s.geometry.rows}x{s.geometry.cols}, device is {d.rows}x{d.cols}"))
    for k, fr in enumerate(s.frames):
        if fr.duration_us < d.min_frame_us:
            issues.append(Issue("frame_too_short", k, f"{fr.duration_us} us < {d.min_frame_us} us"))
        ua = amplitude_to_uA(fr.amplitude_mA)
        if ua > d.max_amplitude_uA:
            issues.append(Issue("amplitude", k, f"{ua} uA > {d.max_amplitude_uA} uA"))
    return FeasibilityReport(not issues, issues)


class DeviceRejected(RuntimeError):
    def __init__(self, report: FeasibilityReport):
        super().__init__("; ".join(str(i) for i in report.issues[:5]))
        self.report = report


class MockDevice:
    """Stand-in for the stimulator firmware.

    Accepts one packet at a time, checks it against the device profile and
    replays the loaded schedule through the simulator.
    """

    def __init__(self, profile: DeviceProfile | None = None, geometry: ArrayGeometry | None = None):
        self.profile = profile or DeviceProfile()
        self.geometry = geometry
        self.schedule: PulseSchedule | None = None

    def load(self, packet: bytes) -> FeasibilityReport:
        sched = decode_schedule(packet, self.geometry)
        report = validate_for_device(sched, self.profile)
        if not report.feasible:
            raise DeviceRejected(report)
        self.schedule = sched
        return report

    def replay(self, **sim_kwargs) -> SimTrace:
        if self.schedule is None:
            raise RuntimeError("no schedule loaded")
        return simulate(self.schedule, **sim_kwargs)
