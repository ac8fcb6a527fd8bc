from collections import Counter

import pytest

from estd.array import ArrayGeometry, ElectrodeId, ElectrodeRole
from estd.compiler import (
    AlignmentError,
    ElectroadhesionParams,
    ElectrotactileParams,
    EmptyScheduleError,
    InvalidPartitionError,
    PartitionPattern,
    Polarity,
    TimingError,
    compile_electroadhesion,
    compile_electrotactile,
    partition_mask,
    schedule_stats,
)
from estd.protocol import encode_schedule

S, G, F = ElectrodeRole.SOURCE, ElectrodeRole.GROUND, ElectrodeRole.FLOATING


def test_checkerboard_mask(geometry):
    a = partition_mask(PartitionPattern.checkerboard(), geometry)
    assert len(a) == 32
    assert all((e.row + e.col) % 2 == 0 for e in a)


def test_row_alternate_mask(geometry):
    a = partition_mask(PartitionPattern.row_alternate(), geometry)
    assert len(a) == 32
    assert {e.row for e in a} == {0, 2, 4, 6}


@pytest.mark.parametrize("mask", [set(), "all"])
def test_degenerate_custom_mask(geometry, mask):
    if mask == "all":
        mask = set(geometry.electrodes())
    with pytest.raises(InvalidPartitionError):
        partition_mask(PartitionPattern.custom(mask), geometry)


def test_custom_mask_out_of_bounds(geometry):
    with pytest.raises(InvalidPartitionError):
        partition_mask(PartitionPattern.custom({ElectrodeId(9, 9)}), geometry)


def test_default_electroadhesion_layout(default_schedule):
    frames = default_schedule.frames
    stim = [f for f in frames if f.amplitude_mA > 0]
    pauses = [f for f in frames if f.amplitude_mA == 0]
    assert len(stim) == 80
    assert len(pauses) == 1 and pauses[0].duration_us == 4000
    assert pauses[0].roles == (G,) * 64
    assert default_schedule.total_duration_us == 8000
    assert ElectroadhesionParams().envelope_frequency_hz == 125.0
    # A sources first, then roles swap
    a0 = frames[0].indices(S)
    assert frames[1].indices(G) == a0
    assert all(f.duration_us == 50 and f.amplitude_mA == 10.0 for f in stim)


def test_wider_pulses_give_fewer_cycles():
    p = ElectroadhesionParams(pulse_width_us=100)
    # oracle: 4000 us burst / (2 * 100 us) per swap cycle
    expected_cycles = 4000 // (2 * 100)
    s = compile_electroadhesion(p)
    assert p.swap_cycles == expected_cycles == 20
    assert sum(1 for f in s.frames if f.amplitude_mA > 0) == 2 * expected_cycles


def test_misaligned_burst_rejected():
    with pytest.raises(AlignmentError):
        compile_electroadhesion(ElectroadhesionParams(burst_ms=4.05))
    with pytest.raises(AlignmentError):
        compile_electroadhesion(ElectroadhesionParams(pulse_width_us=30))


def test_dead_time_frames_are_floating():
    s = compile_electroadhesion(ElectroadhesionParams(dead_time_us=10, burst_ms=4.8))
    gaps = [f for f in s.frames if f.duration_us == 10]
    assert len(gaps) == 80
    assert all(f.roles == (F,) * 64 and f.amplitude_mA == 0 for f in gaps)
    st = schedule_stats(s)
    assert st.envelope_frequency_hz == pytest.approx(1e6 / 8800)


@pytest.mark.parametrize("pattern", [PartitionPattern.row_alternate(), PartitionPattern.checkerboard()])
def test_swap_symmetry(pattern):
    s = compile_electroadhesion(ElectroadhesionParams(pattern=pattern, periods=2))
    a = set(partition_mask(pattern, s.geometry))

    def key(fr):
        return (fr.roles, fr.duration_us, fr.amplitude_mA)

    def swapped(fr):
        roles = tuple({S: G, G: S}.get(r, r) for r in fr.roles)
        return (roles, fr.duration_us, fr.amplitude_mA)

    assert Counter(key(f) for f in s.frames if f.amplitude_mA) == Counter(swapped(f) for f in s.frames if f.amplitude_mA)
    for i in range(64):
        src = sum(f.duration_us for f in s.frames if f.amplitude_mA and f.roles[i] is S)
        gnd = sum(f.duration_us for f in s.frames if f.amplitude_mA and f.roles[i] is G)
        assert src == gnd
    assert len(a) == 32


def test_compilation_is_deterministic():
    p = ElectroadhesionParams(pattern=PartitionPattern.checkerboard(), periods=3)
    assert encode_schedule(compile_electroadhesion(p)) == encode_schedule(compile_electroadhesion(p))


@pytest.mark.parametrize("polarity, n_src, n_gnd", [(Polarity.ANODIC, 1, 63), (Polarity.CATHODIC, 63, 1)])
def test_electrotactile_roles(polarity, n_src, n_gnd):
    s = compile_electrotactile(ElectrotactileParams(target=ElectrodeId(3, 3), polarity=polarity))
    stim = [f for f in s.frames if f.amplitude_mA > 0]
    assert len(stim) == 10
    for f in stim:
        assert (f.count(S), f.count(G)) == (n_src, n_gnd)
        assert f.has_current_path()
        assert f.roles[27] is (S if polarity is Polarity.ANODIC else G)


def test_electrotactile_timing():
    s = compile_electrotactile(ElectrotactileParams(repetition_frequency_hz=200, pulses=4))
    assert s.total_duration_us == 4 * 5000
    gaps = [f for f in s.frames if f.amplitude_mA == 0]
    assert all(f.duration_us == 4950 and f.roles == (G,) * 64 for f in gaps)
    assert schedule_stats(s).envelope_frequency_hz == pytest.approx(200.0)


def test_electrotactile_biphasic():
    s = compile_electrotactile(ElectrotactileParams(biphasic=True, pulses=2))
    stim = [f for f in s.frames if f.amplitude_mA > 0]
    assert [f.count(S) for f in stim] == [1, 63, 1, 63]


def test_electrotactile_errors():
    with pytest.raises(EmptyScheduleError):
        compile_electrotactile(ElectrotactileParams(pulses=0))
    with pytest.raises(TimingError):
        compile_electrotactile(ElectrotactileParams(pulse_width_us=100, repetition_frequency_hz=10_000))


def test_stats_default(default_schedule):
    st = schedule_stats(default_schedule)
    assert st.envelope_frequency_hz == 125.0
    assert st.active_duty_fraction == 0.5
    assert st.swap_cycle_count == 40
    assert st.max_amplitude_mA == 10.0
    assert st.group_sizes == (32, 32)


def test_stats_all_pause(geometry):
    from estd.array import Frame, PulseSchedule

    s = PulseSchedule(geometry, (Frame.uniform(64, G, 1000),) * 3)
    st = schedule_stats(s)
    assert st.active_duty_fraction == 0
    assert st.envelope_frequency_hz is None
    assert st.swap_cycle_count is None


def test_stats_two_periods_recounted():
    s = compile_electroadhesion(ElectroadhesionParams(periods=2))
    # independent recount: an A-source frame immediately followed by its swap
    frames = s.frames
    cycles = sum(
        1
        for a, b in zip(frames, frames[1:])
        if a.amplitude_mA and b.amplitude_mA and a.indices(S) == b.indices(G) and a.indices(S)[0] == 0
    )
    st = schedule_stats(s)
    assert cycles == 80
    assert st.swap_cycle_count == cycles
    assert st.envelope_frequency_hz == 125.0


def test_stats_continuous_drive_has_no_envelope():
    s = compile_electroadhesion(ElectroadhesionParams(pause_ms=0))
    assert schedule_stats(s).envelope_frequency_hz is None


def test_small_geometry():
    g = ArrayGeometry(rows=2, cols=3)
    s = compile_electroadhesion(ElectroadhesionParams(), g)
    assert schedule_stats(s).group_sizes == (3, 3)
