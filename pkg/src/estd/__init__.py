"""Insulator-free electrostatic tactile display: schedule compiler, auditor, simulator."""

from estd.array import (
    ArrayGeometry,
    ElectrodeId,
    ElectrodeRole,
    Frame,
    PulseSchedule,
    electrode_center,
    from_linear_index,
    linear_index,
    schedule_total_duration,
)

__version__ = "0.1.0"

__all__ = [
    "ArrayGeometry",
    "ElectrodeId",
    "ElectrodeRole",
    "Frame",
    "PulseSchedule",
    "electrode_center",
    "from_linear_index",
    "linear_index",
    "schedule_total_duration",
]
