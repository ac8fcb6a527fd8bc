"""Experiment configuration: strict INI sections mapped onto the model types."""

from __future__ import annotations

import configparser
import dataclasses
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

from estd.array import ArrayGeometry, ElectrodeId, ElectrodeRole
from estd.charge import SafetyLimits
from estd.compiler import ElectroadhesionParams, ElectrotactileParams, PartitionPattern, Polarity
from estd.protocol import DeviceProfile
from estd.sim import FingerTrajectory, MechModel, SkinContactModel

# Baseline measurement noise, chosen so the default stimulated/baseline RMS
# ratio comes out near 3.3.
DEFAULT_NOISE_SIGMA_G = 3.2e-5


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, key: str | None = None):
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(key)
        super().__init__(f"{', '.join(where)}: {message}" if where else message)
        self.line = line
        self.key = key


@dataclass
class ExperimentSection:
    mode: str = "electroadhesion"
    dt_s: float = 5e-6
    duration_s: float = 1.0
    seed: int = 0
    noise_sigma_G: float = DEFAULT_NOISE_SIGMA_G
    out_dir: str = "out"
    detrend_window_s: float = 0.2


@dataclass
class GeometrySection:
    rows: int = 8
    cols: int = 8
    electrode_diameter_mm: float = 2.0
    pitch_mm: float = 3.0


@dataclass
class ElectroadhesionSection:
    pulse_width_us: int = 50
    burst_ms: float = 4.0
    pause_ms: float = 4.0
    current_mA: float = 10.0
    pattern: str = "row_alternate"
    periods: int = 1
    dead_time_us: int = 0
    pause_role: str = "ground"


@dataclass
class ElectrotactileSection:
    target_row: int = 3
    target_col: int = 3
    polarity: str = "anodic"
    pulse_width_us: int = 50
    current_mA: float = 10.0
    repetition_frequency_hz: float = 100.0
    pulses: int = 10
    biphasic: bool = False


@dataclass
class SkinSection:
    r_sc_ohm: float = 15_000.0
    c_sc_F: float = 20e-9
    r_body_ohm: float = 1_000.0
    gap_m: float = 5e-6
    epsilon_r_gap: float = 1.0


@dataclass
class MechSection:
    mass_kg: float = 0.005
    stiffness_N_per_m: float = 2_000.0
    damping_Ns_per_m: float = 1.0


@dataclass
class TrajectorySection:
    center_x_mm: float | None = None
    center_y_mm: float | None = None
    radius_mm: float = 5.0
    rev_per_s: float = 2.0
    contact_radius_mm: float = 5.0
    phase0_rad: float = 0.0


@dataclass
class SafetySection:
    max_current_mA: float = 10.0
    max_pulse_width_us: float = 50.0
    max_net_charge_uC: float = 0.0
    max_compliance_V: float = 300.0


@dataclass
class DeviceSection:
    min_frame_us: int = 10
    max_amplitude_uA: int = 20_000


SECTIONS: dict[str, type] = {
    "experiment": ExperimentSection,
    "geometry": GeometrySection,
    "electroadhesion": ElectroadhesionSection,
    "electrotactile": ElectrotactileSection,
    "skin": SkinSection,
    "mech": MechSection,
    "trajectory": TrajectorySection,
    "safety": SafetySection,
    "device": DeviceSection,
}

MODES = ("electroadhesion", "electrotactile", "baseline")


@dataclass
class ExperimentConfig:
    experiment: ExperimentSection = field(default_factory=ExperimentSection)
    geometry: GeometrySection = field(default_factory=GeometrySection)
    electroadhesion: ElectroadhesionSection = field(default_factory=ElectroadhesionSection)
    electrotactile: ElectrotactileSection = field(default_factory=ElectrotactileSection)
    skin: SkinSection = field(default_factory=SkinSection)
    mech: MechSection = field(default_factory=MechSection)
    trajectory: TrajectorySection = field(default_factory=TrajectorySection)
    safety: SafetySection = field(default_factory=SafetySection)
    device: DeviceSection = field(default_factory=DeviceSection)

    # model objects

    def array_geometry(self) -> ArrayGeometry:
        g = self.geometry
        return ArrayGeometry(g.rows, g.cols, g.electrode_diameter_mm, g.pitch_mm)

    def electroadhesion_params(self) -> ElectroadhesionParams:
        e = self.electroadhesion
        return ElectroadhesionParams(
            pulse_width_us=e.pulse_width_us,
            burst_ms=e.burst_ms,
            pause_ms=e.pause_ms,
            current_mA=e.current_mA,
            pattern=PartitionPattern.parse(e.pattern),
            periods=e.periods,
            dead_time_us=e.dead_time_us,
            pause_role=ElectrodeRole[e.pause_role.upper()],
        )

    def electrotactile_params(self) -> ElectrotactileParams:
        e = self.electrotactile
        return ElectrotactileParams(
            target=ElectrodeId(e.target_row, e.target_col),
            polarity=Polarity(e.polarity.lower()),
            pulse_width_us=e.pulse_width_us,
            current_mA=e.current_mA,
            repetition_frequency_hz=e.repetition_frequency_hz,
            pulses=e.pulses,
            biphasic=e.biphasic,
        )

    def skin_model(self) -> SkinContactModel:
        return SkinContactModel(**dataclasses.asdict(self.skin))

    def mech_model(self) -> MechModel:
        return MechModel(**dataclasses.asdict(self.mech))

    def finger_trajectory(self) -> FingerTrajectory:
        t = self.trajectory
        center = None
        if t.center_x_mm is not None or t.center_y_mm is not None:
            if t.center_x_mm is None or t.center_y_mm is None:
                raise ConfigError("set both center_x_mm and center_y_mm or neither", key="trajectory.center")
            center = (t.center_x_mm, t.center_y_mm)
        return FingerTrajectory(center, t.radius_mm, t.rev_per_s, t.contact_radius_mm, t.phase0_rad)

    def safety_limits(self) -> SafetyLimits:
        return SafetyLimits(**dataclasses.asdict(self.safety))

    def device_profile(self) -> DeviceProfile:
        return DeviceProfile(self.device.min_frame_us, self.device.max_amplitude_uA, self.geometry.rows, self.geometry.cols)

    def validate(self) -> None:
        """Build every sub-model once so invalid values fail before any run."""
        if self.experiment.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}", key="experiment.mode")
        checks = [
            ("geometry", self.array_geometry),
            ("electroadhesion", self.electroadhesion_params),
            ("electrotactile", self.electrotactile_params),
            ("skin", self.skin_model),
            ("mech", self.mech_model),
            ("trajectory", self.finger_trajectory),
            ("safety", self.safety_limits),
            ("device", self.device_profile),
        ]
        for name, build in checks:
            try:
                build()
            except ConfigError:
                raise
            except (ValueError, KeyError, TypeError) as exc:
                raise ConfigError(str(exc), key=name) from None
        if not self.experiment.dt_s > 0 or not self.experiment.duration_s > 0:
            raise ConfigError("dt_s and duration_s must be > 0", key="experiment")

    # key access

    def keys(self) -> list[str]:
        return [f"{s}.{f.name}" for s, cls in SECTIONS.items() for f in fields(cls)]

    def get(self, dotted: str) -> Any:
        section, key = _split(dotted)
        return getattr(getattr(self, section), key)

    def set(self, dotted: str, raw: Any) -> None:
        section, key = _split(dotted)
        sec = getattr(self, section)
        setattr(sec, key, _coerce(_field_type(SECTIONS[section], key), raw, dotted))

    def copy(self) -> ExperimentConfig:
        return dataclasses.replace(
            self, **{name: dataclasses.replace(getattr(self, name)) for name in SECTIONS}
        )

    def to_ini(self) -> str:
        lines = []
        for name, cls in SECTIONS.items():
            lines.append(f"[{name}]")
            sec = getattr(self, name)
            for f in fields(cls):
                v = getattr(sec, f.name)
                if v is not None:
                    lines.append(f"{f.name} = {str(v).lower() if isinstance(v, bool) else v}")
            lines.append("")
        return "\n".join(lines)


def _split(dotted: str) -> tuple[str, str]:
    section, _, key = dotted.partition(".")
    cls = SECTIONS.get(section)
    if cls is None or key not in {f.name for f in fields(cls)}:
        raise ConfigError("unknown configuration key", key=dotted)
    return section, key


def _field_type(cls: type, key: str) -> str:
    return next(f.type for f in fields(cls) if f.name == key)


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(type_name: str, raw: Any, key: str, line: int | None = None) -> Any:
    if not isinstance(raw, str):
        return raw
    text = raw.strip()
    try:
        if type_name == "bool":
            if text.lower() in _TRUE:
                return True
            if text.lower() in _FALSE:
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if type_name == "int":
            return int(text)
        if type_name == "float":
            return float(text)
        if type_name == "float | None":
            return None if text.lower() in ("", "none") else float(text)
        return text
    except ValueError as exc:
        raise ConfigError(str(exc), line, key) from None


def _key_line(text: str, section: str, key: str) -> int | None:
    current = None
    for no, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        m = re.match(r"^\[(.+)\]$", s)
        if m:
            current = m.group(1).strip()
        elif current == section and re.match(rf"^{re.escape(key)}\s*[=:]", s):
            return no
    return None


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(
        inline_comment_prefixes=(";", "#"), interpolation=None, strict=True, default_section="\0defaults"
    )
    parser.optionxform = str  # keys are case-sensitive (current_mA)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        line = getattr(exc, "lineno", None)
        raise ConfigError(exc.message.splitlines()[0] if hasattr(exc, "message") else str(exc), line) from None
    cfg = ExperimentConfig()
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError("unknown section", _key_line_section(text, section), key=f"[{section}]")
        for key, raw in parser.items(section):
            dotted = f"{section}.{key}"
            line = _key_line(text, section, key)
            try:
                _split(dotted)
            except ConfigError:
                raise ConfigError("unknown configuration key", line, dotted) from None
            value = _coerce(_field_type(SECTIONS[section], key), raw, dotted, line)
            setattr(getattr(cfg, section), key, value)
    return cfg


def _key_line_section(text: str, section: str) -> int | None:
    for no, line in enumerate(text.splitlines(), start=1):
        if line.strip() == f"[{section}]":
            return no
    return None


def load_config(path: str | Path | None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    return parse_config(Path(path).read_text())
