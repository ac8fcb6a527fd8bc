"""Finger contact, skin circuit, electrostatic force and fingertip vibration.

Circuit
-------
Every contacted electrode couples to the conductive tissue through an
interface element: the stratum-corneum resistance and capacitance in
parallel with the air-gap capacitance. ``SkinContactModel.r_sc_ohm`` and
``c_sc_F`` describe the skin seen on the round trip between one fully covered
source electrode and one fully covered ground electrode, so each interface
carries half the resistance and twice the capacitance. The path is

    source interfaces -> r_body -> ground interfaces.

An interface scales with coverage (R / coverage, C * coverage), so every
element shares one time constant and a coverage-proportional current split
gives all same-role electrodes the same voltage slew.

Capacitor voltages advance with the exact exponential update for
piecewise-constant current. The drive is a current source with a compliance
rail: when the commanded current would push the terminal voltage above the
rail within a step, the current is reduced to the largest value that stays on
it.

Mechanics
---------
The electrostatic attraction eps0*epsr*A*V^2 / (2 d^2), summed over contacted
electrodes, drives a mass-spring-damper normal to the surface. The oscillator
is advanced with its exact zero-order-hold discretisation, so with no input
its energy can only decay.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numba
import numpy as np
from scipy.linalg import expm

from estd.analysis import G, TimeSeries
from estd.array import ArrayGeometry, ElectrodeId, ElectrodeRole, Frame, PulseSchedule, electrode_center
from estd.compiler import ElectroadhesionParams, compile_electroadhesion

EPS0 = 8.8541878128e-12  # F/m

CSV_HEADER = ("t_s", "v_drive_V", "v_gap_V", "force_N", "accel_G", "contact_count")


class StepSizeError(ValueError):
    pass


class DivergenceError(RuntimeError):
    def __init__(self, step: int):
        super().__init__(f"simulation state became non-finite at step {step}")
        self.step = step


@dataclass(frozen=True)
class SkinContactModel:
    r_sc_ohm: float = 15_000.0
    c_sc_F: float = 20e-9
    r_body_ohm: float = 1_000.0
    gap_m: float = 5e-6
    epsilon_r_gap: float = 1.0

    def __post_init__(self):
        for name in ("r_sc_ohm", "c_sc_F", "r_body_ohm", "gap_m", "epsilon_r_gap"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")


@dataclass(frozen=True)
class MechModel:
    mass_kg: float = 0.005
    stiffness_N_per_m: float = 2_000.0
    damping_Ns_per_m: float = 1.0

    def __post_init__(self):
        if not self.mass_kg > 0:
            raise ValueError("mass must be > 0")
        if self.stiffness_N_per_m < 0 or self.damping_Ns_per_m < 0:
            raise ValueError("stiffness and damping must be >= 0")

    def zoh(self, dt_s: float) -> tuple[np.ndarray, np.ndarray]:
        """Exact discretisation (Phi, Gamma) of x'' = (F - k x - c x') / m."""
        m, k, c = self.mass_kg, self.stiffness_N_per_m, self.damping_Ns_per_m
        aug = np.zeros((3, 3))
        aug[0, 1] = 1.0
        aug[1, 0] = -k / m
        aug[1, 1] = -c / m
        aug[1, 2] = 1.0 / m
        e = expm(aug * dt_s)
        return e[:2, :2].copy(), e[:2, 2].copy()


@dataclass(frozen=True)
class FingerTrajectory:
    """Circular tracing path; ``center_mm=None`` means the array centre."""

    center_mm: tuple[float, float] | None = None
    radius_mm: float = 5.0
    rev_per_s: float = 2.0
    contact_radius_mm: float = 5.0
    phase0_rad: float = 0.0

    def __post_init__(self):
        if self.radius_mm < 0 or self.rev_per_s < 0:
            raise ValueError("radius and rev_per_s must be >= 0")
        if not self.contact_radius_mm > 0:
            raise ValueError("contact radius must be > 0")

    @classmethod
    def stationary(cls, center_mm: tuple[float, float], contact_radius_mm: float = 5.0) -> FingerTrajectory:
        return cls(center_mm=center_mm, radius_mm=0.0, rev_per_s=0.0, contact_radius_mm=contact_radius_mm)

    def resolved_center(self, geometry: ArrayGeometry) -> tuple[float, float]:
        if self.center_mm is not None:
            return (float(self.center_mm[0]), float(self.center_mm[1]))
        ox, oy = geometry.origin
        return (ox + (geometry.cols - 1) * geometry.pitch_mm / 2, oy + (geometry.rows - 1) * geometry.pitch_mm / 2)

    def position(self, t: float, geometry: ArrayGeometry) -> tuple[float, float]:
        cx, cy = self.resolved_center(geometry)
        th = 2 * math.pi * self.rev_per_s * t + self.phase0_rad
        return (cx + self.radius_mm * math.cos(th), cy + self.radius_mm * math.sin(th))


@numba.njit(cache=True)
def _overlap_area(d, r1, r2):
    """Intersection area of two discs with radii r1, r2 and centre distance d."""
    if d >= r1 + r2:
        return 0.0
    if d <= abs(r1 - r2):
        rm = min(r1, r2)
        return math.pi * rm * rm
    a1 = (d * d + r1 * r1 - r2 * r2) / (2.0 * d * r1)
    a2 = (d * d + r2 * r2 - r1 * r1) / (2.0 * d * r2)
    a1 = min(1.0, max(-1.0, a1))
    a2 = min(1.0, max(-1.0, a2))
    k = (-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2)
    return r1 * r1 * math.acos(a1) + r2 * r2 * math.acos(a2) - 0.5 * math.sqrt(max(k, 0.0))


def contact_state(traj: FingerTrajectory, geometry: ArrayGeometry, t: float) -> dict[ElectrodeId, float]:
    """Fraction of each electrode's area under the fingerpad at time ``t``."""
    fx, fy = traj.position(t, geometry)
    re = geometry.electrode_radius_mm
    out = {}
    for e in geometry.electrodes():
        ex, ey = electrode_center(e, geometry)
        d = math.hypot(ex - fx, ey - fy)
        out[e] = min(1.0, _overlap_area(d, traj.contact_radius_mm, re) / (math.pi * re * re))
    return out


@dataclass(frozen=True)
class SimTrace:
    dt_s: float
    t: np.ndarray
    v_drive_V: np.ndarray
    v_gap_V: np.ndarray
    force_N: np.ndarray
    accel_G: np.ndarray
    contact_count: np.ndarray
    clamped_steps: int = 0
    displacement_m: np.ndarray | None = None
    velocity_m_per_s: np.ndarray | None = None
    meta: dict = field(default_factory=dict, compare=False)

    def __len__(self) -> int:
        return len(self.t)

    @property
    def fs_hz(self) -> float:
        return 1.0 / self.dt_s

    def accel_series(self) -> TimeSeries:
        return TimeSeries(self.fs_hz, self.accel_G)

    def with_noise(self, sigma_G: float, seed: int | None) -> SimTrace:
        if sigma_G == 0:
            return self
        noise = np.random.default_rng(seed).normal(0.0, sigma_G, len(self.t))
        return SimTrace(
            self.dt_s, self.t, self.v_drive_V, self.v_gap_V, self.force_N,
            self.accel_G + noise, self.contact_count, self.clamped_steps,
            self.displacement_m, self.velocity_m_per_s, dict(self.meta),
        )

    def write_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            cols = (self.t, self.v_drive_V, self.v_gap_V, self.force_N, self.accel_G)
            for row in zip(*cols, self.contact_count):
                w.writerow([f"{v:.12g}" for v in row[:5]] + [int(row[5])])


def element_parameters(skin: SkinContactModel, geometry: ArrayGeometry) -> tuple[float, float, float]:
    """(R, C, gap C) of one fully covered electrode interface, in ohm and farad."""
    area_m2 = math.pi * (geometry.electrode_radius_mm * 1e-3) ** 2
    c_gap = EPS0 * skin.epsilon_r_gap * area_m2 / skin.gap_m
    return skin.r_sc_ohm / 2, 2 * skin.c_sc_F + c_gap, c_gap


@numba.njit(cache=True)
def _kernel(
    n_steps, dt_s, bounds_us, amps_mA, roles, repeat,
    ex, ey, re_mm, cx, cy, path_r, omega, phase0, contact_r,
    r_unit, c_unit, r_body, v_max, k_force,
    phi, gam, mass, stiff, damp,
):
    n_el = ex.shape[0]
    n_fr = amps_mA.shape[0]
    total_us = bounds_us[n_fr]
    v_drive = np.zeros(n_steps)
    v_gap = np.zeros(n_steps)
    force = np.zeros(n_steps)
    accel = np.zeros(n_steps)
    count = np.zeros(n_steps, dtype=np.int64)
    xs = np.zeros(n_steps)
    vs = np.zeros(n_steps)
    volt = np.zeros(n_el)
    cov = np.zeros(n_el)
    tau = r_unit * c_unit
    alpha = math.exp(-dt_s / tau)
    beta = tau * (1.0 - alpha)
    e_area = math.pi * re_mm * re_mm
    x = 0.0
    v = 0.0
    fi = 0
    clamped = 0
    for k in range(n_steps):
        t = k * dt_s
        t_us = t * 1e6
        if repeat and total_us > 0:
            t_us = t_us - total_us * math.floor(t_us / total_us + 1e-12)
            if t_us < bounds_us[fi] - 1e-6:
                fi = 0
        while fi < n_fr and t_us >= bounds_us[fi + 1] - 1e-6:
            fi += 1
        active = fi < n_fr
        amp = amps_mA[fi] * 1e-3 if active else 0.0

        th = omega * t + phase0
        fx = cx + path_r * math.cos(th)
        fy = cy + path_r * math.sin(th)
        s_src = 0.0
        s_gnd = 0.0
        s_tot = 0.0
        w_src = 0.0
        w_gnd = 0.0
        sq = 0.0
        nc = 0
        for i in range(n_el):
            d = math.sqrt((ex[i] - fx) ** 2 + (ey[i] - fy) ** 2)
            c = min(1.0, _overlap_area(d, contact_r, re_mm) / e_area)
            cov[i] = c
            if c > 0.0:
                nc += 1
                s_tot += c
                sq += c * volt[i] * volt[i]
                if active:
                    if roles[fi, i] == 1:
                        s_src += c
                        w_src += c * volt[i]
                    elif roles[fi, i] == 0:
                        s_gnd += c
                        w_gnd += c * volt[i]

        cur = 0.0
        vd = 0.0
        if amp > 0.0 and s_src > 0.0 and s_gnd > 0.0:
            back = w_src / s_src - w_gnd / s_gnd
            lim_start = (v_max - back) / r_body
            slope_end = r_body + beta / c_unit * (1.0 / s_src + 1.0 / s_gnd)
            lim_end = (v_max - alpha * back) / slope_end
            cur = min(amp, lim_start, lim_end)
            if cur < amp:
                clamped += 1
            if cur <= 0.0:
                cur = 0.0
                vd = v_max
            else:
                vd = back + cur * r_body

        f = k_force * sq
        v_drive[k] = vd
        force[k] = f
        v_gap[k] = math.sqrt(sq / s_tot) if s_tot > 0.0 else 0.0
        count[k] = nc
        accel[k] = (f - stiff * x - damp * v) / mass
        xs[k] = x
        vs[k] = v

        x_new = phi[0, 0] * x + phi[0, 1] * v + gam[0] * f
        v = phi[1, 0] * x + phi[1, 1] * v + gam[1] * f
        x = x_new
        if not (math.isfinite(x) and math.isfinite(v) and math.isfinite(f)):
            return v_drive, v_gap, force, accel, count, xs, vs, clamped, k

        u_src = cur / (s_src * c_unit) if cur > 0.0 else 0.0
        u_gnd = -cur / (s_gnd * c_unit) if cur > 0.0 else 0.0
        for i in range(n_el):
            u = 0.0
            if cur > 0.0 and cov[i] > 0.0:
                if roles[fi, i] == 1:
                    u = u_src
                elif roles[fi, i] == 0:
                    u = u_gnd
            volt[i] = alpha * volt[i] + beta * u
    return v_drive, v_gap, force, accel, count, xs, vs, clamped, -1


_ROLE_CODE = {ElectrodeRole.GROUND: 0, ElectrodeRole.SOURCE: 1, ElectrodeRole.FLOATING: 2}


def _schedule_arrays(s: PulseSchedule) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n_fr = len(s.frames)
    bounds = np.zeros(n_fr + 1)
    bounds[1:] = np.cumsum([f.duration_us for f in s.frames])
    amps = np.array([f.amplitude_mA for f in s.frames], dtype=float)
    roles = np.full((max(n_fr, 1), s.geometry.size), 2, dtype=np.int8)
    for k, fr in enumerate(s.frames):
        roles[k] = [_ROLE_CODE[r] for r in fr.roles]
    return bounds, amps, roles


def simulate(
    s: PulseSchedule,
    skin: SkinContactModel | None = None,
    mech: MechModel | None = None,
    traj: FingerTrajectory | None = None,
    dt_s: float = 5e-6,
    duration_s: float = 1.0,
    compliance_V: float = 300.0,
    repeat: bool = False,
) -> SimTrace:
    """Run the circuit and mechanics over ``duration_s``.

    Past the end of the schedule no current is commanded unless ``repeat``
    loops it.
    """
    skin = skin or SkinContactModel()
    mech = mech or MechModel()
    traj = traj or FingerTrajectory()
    geometry = s.geometry
    if not duration_s > 0:
        raise ValueError("duration must be > 0")
    if not dt_s > 0:
        raise StepSizeError("time step must be > 0")
    shortest = min((f.duration_us for f in s.frames), default=math.inf)
    if dt_s * 1e6 > shortest / 10 + 1e-9:
        raise StepSizeError(
            f"dt {dt_s * 1e6:g} us cannot resolve {shortest} us frames (need dt <= {shortest / 10:g} us)"
        )
    n_steps = int(round(duration_s / dt_s))

    bounds, amps, roles = _schedule_arrays(s)
    centers = np.array([electrode_center(e, geometry) for e in geometry.electrodes()])
    cx, cy = traj.resolved_center(geometry)
    r_unit, c_unit, _ = element_parameters(skin, geometry)
    area_m2 = math.pi * (geometry.electrode_radius_mm * 1e-3) ** 2
    k_force = EPS0 * skin.epsilon_r_gap * area_m2 / (2 * skin.gap_m ** 2)
    phi, gam = mech.zoh(dt_s)

    v_drive, v_gap, force, accel, count, xs, vs, clamped, bad = _kernel(
        n_steps, dt_s, bounds, amps, roles, repeat,
        centers[:, 0].copy(), centers[:, 1].copy(), geometry.electrode_radius_mm,
        cx, cy, traj.radius_mm, 2 * math.pi * traj.rev_per_s, traj.phase0_rad, traj.contact_radius_mm,
        r_unit, c_unit, skin.r_body_ohm, compliance_V, k_force,
        phi, gam, mech.mass_kg, mech.stiffness_N_per_m, mech.damping_Ns_per_m,
    )
    if bad >= 0:
        raise DivergenceError(int(bad))
    return SimTrace(
        dt_s=dt_s,
        t=np.arange(n_steps) * dt_s,
        v_drive_V=v_drive,
        v_gap_V=v_gap,
        force_N=force,
        accel_G=accel / G,
        contact_count=count,
        clamped_steps=int(clamped),
        displacement_m=xs,
        velocity_m_per_s=vs,
        meta={"label": s.label, "compliance_V": compliance_V},
    )


def synthesize_experiment(
    params: ElectroadhesionParams | None,
    skin: SkinContactModel | None = None,
    mech: MechModel | None = None,
    traj: FingerTrajectory | None = None,
    duration_s: float = 1.0,
    dt_s: float = 5e-6,
    noise_sigma_G: float = 0.0,
    seed: int | None = 0,
    geometry: ArrayGeometry | None = None,
    compliance_V: float = 300.0,
) -> SimTrace:
    """One recording: stimulated with ``params``, or the unstimulated baseline for ``None``.

    Enough envelope periods are compiled to cover ``duration_s``. Noise is
    added to the acceleration channel only.
    """
    geometry = geometry or ArrayGeometry()
    if params is None:
        idle = Frame.uniform(geometry.size, ElectrodeRole.GROUND, max(1, int(round(duration_s * 1e6))))
        sched = PulseSchedule(geometry, (idle,), label="baseline")
    else:
        period_s = (params.burst_ms + params.pause_ms) / 1000
        if duration_s < period_s - 1e-12:
            raise ValueError(f"duration {duration_s} s is shorter than one {period_s} s envelope period")
        periods = max(params.periods, math.ceil(duration_s / period_s - 1e-9))
        params = replace(params, periods=periods)
        sched = compile_electroadhesion(params, geometry)
    trace = simulate(sched, skin, mech, traj, dt_s=dt_s, duration_s=duration_s, compliance_V=compliance_V)
    return trace.with_noise(noise_sigma_G, seed)
