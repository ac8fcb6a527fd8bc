import math

import numpy as np
import pytest

from conftest import pair_finger, pair_schedule
from estd.analysis import dominant_frequency, moving_average_detrend
from estd.array import ArrayGeometry, ElectrodeId, ElectrodeRole, Frame, PulseSchedule, electrode_center
from estd.compiler import ElectroadhesionParams
from estd.sim import (
    DivergenceError,
    FingerTrajectory,
    MechModel,
    SkinContactModel,
    StepSizeError,
    contact_state,
    element_parameters,
    simulate,
    synthesize_experiment,
)


def mc_coverage(finger_xy, finger_r, elec_xy, elec_r, n=4_000_000, seed=1):
    """Oracle: fraction of uniform points in the electrode disc that fall under the finger."""
    rng = np.random.default_rng(seed)
    rad = elec_r * np.sqrt(rng.random(n))
    ang = 2 * np.pi * rng.random(n)
    x = elec_xy[0] + rad * np.cos(ang)
    y = elec_xy[1] + rad * np.sin(ang)
    return float(np.mean((x - finger_xy[0]) ** 2 + (y - finger_xy[1]) ** 2 <= finger_r**2))


def test_full_containment(geometry):
    c = electrode_center(ElectrodeId(3, 3), geometry)
    cov = contact_state(FingerTrajectory.stationary(c, 1.0), geometry, 0.0)
    assert cov[ElectrodeId(3, 3)] == 1.0
    assert sum(1 for v in cov.values() if v > 0) == 1


def test_far_finger(geometry):
    cov = contact_state(FingerTrajectory.stationary((200.0, 200.0)), geometry, 0.3)
    assert all(v == 0 for v in cov.values())


@pytest.mark.parametrize("contact_r", [5.0, 1.5, 1.2])
def test_midway_coverage_matches_monte_carlo(geometry, contact_r):
    e0, e1 = ElectrodeId(3, 3), ElectrodeId(3, 4)
    c0, c1 = electrode_center(e0, geometry), electrode_center(e1, geometry)
    mid = ((c0[0] + c1[0]) / 2, (c0[1] + c1[1]) / 2)
    cov = contact_state(FingerTrajectory.stationary(mid, contact_r), geometry, 0.0)
    assert cov[e0] == pytest.approx(cov[e1], abs=1e-12)
    assert cov[e0] == pytest.approx(mc_coverage(mid, contact_r, c0, 1.0), abs=1e-3)


def test_circular_path_position(geometry):
    traj = FingerTrajectory(center_mm=(10.0, 10.0), radius_mm=4.0, rev_per_s=2.0)
    assert traj.position(0.0, geometry) == pytest.approx((14.0, 10.0))
    assert traj.position(0.125, geometry) == pytest.approx((10.0, 14.0))
    assert traj.position(0.5, geometry) == pytest.approx((14.0, 10.0))
    assert FingerTrajectory().resolved_center(geometry) == (10.5, 10.5)


def test_steady_drive_voltage_in_calibration_window():
    tr = simulate(pair_schedule(), traj=pair_finger(), dt_s=5e-6, duration_s=0.05)
    steady = tr.v_drive_V[-1000:]
    assert 100 <= steady.min() and steady.max() <= 200
    # closed form: 10 mA through r_sc + r_body
    assert steady[-1] == pytest.approx(0.01 * 16_000, rel=1e-9)
    assert tr.v_drive_V.max() <= 300


def test_rc_step_response_matches_closed_form():
    skin = SkinContactModel(gap_m=math.inf)
    tr = simulate(pair_schedule(), skin=skin, traj=pair_finger(), dt_s=1e-6, duration_s=2e-3)
    current = 0.01
    # two interfaces (r_sc/2, 2 c_sc) in series are one r_sc || c_sc element
    r, c = skin.r_sc_ohm, skin.c_sc_F
    t = tr.t[1:]
    oracle = current * r * (1 - np.exp(-t / (r * c)))
    got = tr.v_drive_V[1:] - current * skin.r_body_ohm
    assert np.max(np.abs(got - oracle) / oracle) < 1e-6
    assert np.all(tr.force_N == 0)


def test_compliance_clamp():
    skin = SkinContactModel(r_sc_ohm=60_000)
    tr = simulate(pair_schedule(), skin=skin, traj=pair_finger(), dt_s=5e-6, duration_s=0.02)
    assert tr.v_drive_V.max() <= 300 + 1e-9
    assert tr.v_drive_V[-1] == pytest.approx(300, rel=1e-6)
    assert tr.clamped_steps > 0


def test_compliance_never_exceeded_under_high_current():
    p = ElectroadhesionParams(current_mA=200.0)
    tr = synthesize_experiment(p, duration_s=0.02)
    assert tr.v_drive_V.max() <= 300 + 1e-9
    assert tr.clamped_steps > 0


def test_zero_amplitude_gives_no_force(default_schedule):
    tr = simulate(default_schedule.scaled(0.0), duration_s=0.02)
    assert np.all(tr.force_N == 0) and np.all(tr.accel_G == 0) and np.all(tr.v_drive_V == 0)


def test_force_nonnegative(stim_trace):
    assert np.all(stim_trace.force_N >= 0)
    assert stim_trace.force_N.max() > 0


def test_quadratic_scaling():
    finger = pair_finger()
    a = simulate(pair_schedule(5.0), traj=finger, duration_s=0.02)
    b = simulate(pair_schedule(10.0), traj=finger, duration_s=0.02)
    assert b.v_gap_V[-1] / a.v_gap_V[-1] == pytest.approx(2.0, rel=0.02)
    assert b.force_N[-1] / a.force_N[-1] == pytest.approx(4.0, rel=0.02)


def test_parallel_plate_force_value():
    # steady interface voltage 10 mA * 7.5 kOhm on each of the two covered electrodes
    skin = SkinContactModel()
    tr = simulate(pair_schedule(), skin=skin, traj=pair_finger(), duration_s=0.02)
    area = math.pi * 1e-3**2
    expected = 2 * 8.8541878128e-12 * area * 75.0**2 / (2 * skin.gap_m**2)
    assert tr.force_N[-1] == pytest.approx(expected, rel=1e-6)


def test_energy_non_increasing_without_input():
    mech = MechModel()
    phi, _ = mech.zoh(5e-6)
    state = np.array([1e-4, 0.05])
    energy = []
    for _ in range(20_000):
        x, v = state
        energy.append(0.5 * mech.mass_kg * v * v + 0.5 * mech.stiffness_N_per_m * x * x)
        state = phi @ state
    assert np.all(np.diff(energy) <= 1e-18)
    assert energy[-1] < energy[0]


def test_energy_non_increasing_in_simulation(geometry):
    # one 2 ms burst, then no current: once the interface charge has bled
    # away the oscillator can only lose energy
    burst = Frame.from_groups(64, range(32), range(32, 64), 2000, 10.0)
    s = PulseSchedule(geometry, (burst,))
    mech = MechModel()
    tr = simulate(s, mech=mech, traj=FingerTrajectory.stationary((10.5, 10.5)), duration_s=0.1)
    tail = tr.t > 0.03
    assert tr.force_N[tail].max() < 1e-20
    x, v = tr.displacement_m[tail], tr.velocity_m_per_s[tail]
    energy = 0.5 * mech.mass_kg * v**2 + 0.5 * mech.stiffness_N_per_m * x**2
    assert energy[0] > 0
    assert np.all(np.diff(energy) <= 1e-12 * energy[0])


def test_mech_zoh_matches_closed_form():
    mech = MechModel(stiffness_N_per_m=0.0, damping_Ns_per_m=0.0)
    phi, gam = mech.zoh(1e-3)
    assert phi == pytest.approx(np.array([[1, 1e-3], [0, 1]]))
    assert gam == pytest.approx([0.5 * 1e-6 / mech.mass_kg, 1e-3 / mech.mass_kg])


def test_step_size_error(default_schedule):
    with pytest.raises(StepSizeError):
        simulate(default_schedule, dt_s=10e-6, duration_s=0.01)


def test_divergence_reported():
    with pytest.raises(DivergenceError) as info:
        simulate(pair_schedule(), traj=pair_finger(), mech=MechModel(mass_kg=1e-300), duration_s=1e-3)
    assert info.value.step >= 0


def test_stationary_off_array_no_contact(default_schedule):
    tr = simulate(default_schedule, traj=FingerTrajectory.stationary((-50.0, -50.0)), duration_s=0.01)
    assert np.all(tr.contact_count == 0) and np.all(tr.force_N == 0) and np.all(tr.v_drive_V == 0)


def test_trace_shapes(stim_trace):
    n = len(stim_trace)
    assert n == 200_000
    for col in (stim_trace.v_drive_V, stim_trace.v_gap_V, stim_trace.force_N, stim_trace.accel_G, stim_trace.contact_count):
        assert len(col) == n
    assert stim_trace.contact_count.min() > 0


def test_force_fundamental_is_125_hz(stim_trace):
    from estd.analysis import TimeSeries

    assert dominant_frequency(moving_average_detrend(TimeSeries(stim_trace.fs_hz, stim_trace.force_N))) == pytest.approx(125.0)
    assert dominant_frequency(moving_average_detrend(stim_trace.accel_series())) == pytest.approx(125.0)


def test_baseline_without_noise_is_zero():
    tr = synthesize_experiment(None, duration_s=1.0, noise_sigma_G=0.0)
    assert np.all(tr.accel_G == 0)


def test_baseline_noise_reproducible():
    a = synthesize_experiment(None, duration_s=0.1, noise_sigma_G=0.01, seed=7)
    b = synthesize_experiment(None, duration_s=0.1, noise_sigma_G=0.01, seed=7)
    assert np.array_equal(a.accel_G, b.accel_G)
    direct = math.sqrt(sum(x * x for x in a.accel_G.tolist()) / len(a.accel_G))
    assert direct == pytest.approx(0.01, rel=0.02)
    c = synthesize_experiment(None, duration_s=0.1, noise_sigma_G=0.01, seed=8)
    assert not np.array_equal(a.accel_G, c.accel_G)


def test_determinism():
    p = ElectroadhesionParams()
    a = synthesize_experiment(p, duration_s=0.05, noise_sigma_G=1e-4, seed=3)
    b = synthesize_experiment(p, duration_s=0.05, noise_sigma_G=1e-4, seed=3)
    for name in ("v_drive_V", "v_gap_V", "force_N", "accel_G", "contact_count"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_short_duration_rejected():
    with pytest.raises(ValueError):
        synthesize_experiment(ElectroadhesionParams(), duration_s=0.004)


def test_repeat_loops_schedule(default_schedule):
    once = simulate(default_schedule, duration_s=0.016)
    looped = simulate(default_schedule, duration_s=0.016, repeat=True)
    half = len(once) // 2
    assert np.all(once.v_drive_V[half + 10 :] == 0)
    assert looped.v_drive_V[half + 10 :].max() > 0


def test_element_parameters(geometry):
    r, c, cg = element_parameters(SkinContactModel(), geometry)
    assert r == 7500
    assert cg == pytest.approx(8.8541878128e-12 * math.pi * 1e-6 / 5e-6)
    assert c == pytest.approx(40e-9 + cg)


def test_csv_format(tmp_path):
    tr = synthesize_experiment(ElectroadhesionParams(), duration_s=0.01)
    path = tmp_path / "t.csv"
    tr.write_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "t_s,v_drive_V,v_gap_V,force_N,accel_G,contact_count"
    assert len(lines) == len(tr) + 1
    row = lines[1234].split(",")
    assert float(row[4]) == pytest.approx(tr.accel_G[1233], rel=1e-11)


def test_invalid_models():
    with pytest.raises(ValueError):
        SkinContactModel(r_sc_ohm=0)
    with pytest.raises(ValueError):
        MechModel(mass_kg=0)
    with pytest.raises(ValueError):
        FingerTrajectory(radius_mm=-1)
