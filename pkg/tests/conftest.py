import pytest

from estd.array import ArrayGeometry, ElectrodeId, Frame, PulseSchedule, electrode_center, linear_index
from estd.compiler import ElectroadhesionParams, compile_electroadhesion
from estd.sim import FingerTrajectory, synthesize_experiment


@pytest.fixture(scope="session")
def geometry():
    return ArrayGeometry()


@pytest.fixture(scope="session")
def default_schedule():
    return compile_electroadhesion(ElectroadhesionParams())


@pytest.fixture(scope="session")
def stim_trace():
    """Noise-free 1 s stimulated recording with every default."""
    return synthesize_experiment(ElectroadhesionParams(), duration_s=1.0, noise_sigma_G=0.0)


def pair_schedule(current_mA=10.0, duration_us=1_000_000, geometry=None):
    """Constant current from (3,3) into (3,4); everything else floating."""
    g = geometry or ArrayGeometry()
    src = linear_index(ElectrodeId(3, 3), g)
    gnd = linear_index(ElectrodeId(3, 4), g)
    return PulseSchedule(g, (Frame.from_groups(g.size, [src], [gnd], duration_us, current_mA),))


def pair_finger(geometry=None, contact_radius_mm=5.0):
    """Stationary fingerpad centred between (3,3) and (3,4), covering both fully."""
    g = geometry or ArrayGeometry()
    (x0, y0), (x1, y1) = electrode_center(ElectrodeId(3, 3), g), electrode_center(ElectrodeId(3, 4), g)
    return FingerTrajectory.stationary(((x0 + x1) / 2, (y0 + y1) / 2), contact_radius_mm)
