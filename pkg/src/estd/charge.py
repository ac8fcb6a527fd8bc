"""Static charge accounting and safety limits for pulse schedules.

Commanded current is split evenly among the electrodes holding the same role
in a frame: each Source receives +I/|sources| and each Ground -I/|grounds|.
True division depends on contact impedance and is left to the simulator; the
even split captures the group-swap symmetry that makes the biphasic drive
charge balanced.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from estd.array import ElectrodeId, ElectrodeRole, PulseSchedule, from_linear_index

# mA * us = nC
_UC_PER_MA_US = 1e-3


class OpenCircuitError(ValueError):
    def __init__(self, frame_index: int):
        super().__init__(f"frame {frame_index} commands current without both a Source and a Ground electrode")
        self.frame_index = frame_index


@dataclass(frozen=True)
class ChargeReport:
    per_electrode_net_uC: dict[ElectrodeId, float]
    max_abs_net_uC: float
    max_instantaneous_imbalance_uC: float

    @property
    def total_uC(self) -> float:
        return float(np.sum(list(self.per_electrode_net_uC.values())))

    def as_array(self, rows: int, cols: int) -> np.ndarray:
        out = np.zeros((rows, cols))
        for e, q in self.per_electrode_net_uC.items():
            out[e.row, e.col] = q
        return out


def _frame_charge_vectors(s: PulseSchedule) -> np.ndarray:
    """(n_frames, n_electrodes) signed charge delivered per frame, in uC."""
    n = s.geometry.size
    out = np.zeros((len(s.frames), n))
    for k, fr in enumerate(s.frames):
        if fr.amplitude_mA == 0:
            continue
        src = fr.indices(ElectrodeRole.SOURCE)
        gnd = fr.indices(ElectrodeRole.GROUND)
        if not src or not gnd:
            raise OpenCircuitError(k)
        q = fr.amplitude_mA * fr.duration_us * _UC_PER_MA_US
        out[k, src] = q / len(src)
        out[k, gnd] = -q / len(gnd)
    return out


def net_charge(s: PulseSchedule) -> ChargeReport:
    per_frame = _frame_charge_vectors(s)
    n = s.geometry.size
    running = np.zeros(n)
    worst = 0.0
    for row in per_frame:
        running += row
        worst = max(worst, float(np.max(np.abs(running))) if n else 0.0)
    per = {from_linear_index(i, s.geometry): float(running[i]) for i in range(n)}
    return ChargeReport(
        per_electrode_net_uC=per,
        max_abs_net_uC=float(np.max(np.abs(running))) if n else 0.0,
        max_instantaneous_imbalance_uC=worst,
    )


@dataclass(frozen=True)
class SafetyLimits:
    max_current_mA: float = 10.0
    max_pulse_width_us: float = 50.0
    max_net_charge_uC: float = 0.0
    max_compliance_V: float = 300.0

    def __post_init__(self):
        if min(self.max_current_mA, self.max_pulse_width_us, self.max_compliance_V) <= 0:
            raise ValueError("current, pulse width and compliance limits must be > 0")
        if self.max_net_charge_uC < 0:
            raise ValueError("net charge limit must be >= 0")


@dataclass(frozen=True)
class Violation:
    kind: str
    frame_index: int | None
    value: float
    limit: float

    def __str__(self) -> str:
        where = f"frame {self.frame_index}" if self.frame_index is not None else "schedule"
        return f"{self.kind}: {where} value {self.value:g} exceeds limit {self.limit:g}"


@dataclass(frozen=True)
class SafetyReport:
    passed: bool
    violations: list[Violation] = field(default_factory=list)
    charge: ChargeReport | None = None

    def lines(self) -> list[str]:
        return [str(v) for v in self.violations]


def check_safety(s: PulseSchedule, limits: SafetyLimits | None = None) -> SafetyReport:
    """Audit a schedule against static limits. Never raises on violations."""
    limits = limits or SafetyLimits()
    violations: list[Violation] = []
    for k, fr in enumerate(s.frames):
        if fr.amplitude_mA == 0:
            continue
        if fr.amplitude_mA > limits.max_current_mA:
            violations.append(Violation("current", k, fr.amplitude_mA, limits.max_current_mA))
        if fr.duration_us > limits.max_pulse_width_us:
            violations.append(Violation("pulse_width", k, fr.duration_us, limits.max_pulse_width_us))
    try:
        report = net_charge(s)
    except OpenCircuitError as exc:
        violations.append(Violation("open_circuit", exc.frame_index, 1.0, 0.0))
        report = None
    # 1e-12 uC absorbs float rounding from uneven group sizes
    if report is not None and report.max_abs_net_uC > limits.max_net_charge_uC + 1e-12:
        violations.append(Violation("net_charge", None, report.max_abs_net_uC, limits.max_net_charge_uC))
    return SafetyReport(passed=not violations, violations=violations, charge=report)


def check_compliance(v_drive_V: np.ndarray, limits: SafetyLimits | None = None) -> list[Violation]:
    """Post-simulation check of drive voltage samples against the compliance limit."""
    limits = limits or SafetyLimits()
    v = np.asarray(v_drive_V)
    bad = np.flatnonzero(v > limits.max_compliance_V)
    return [Violation("compliance", None, float(v[i]), limits.max_compliance_V) for i in bad[:20]]
