import numpy as np
import pytest

from platoon_energy.trajectory import PlatoonDataset, Trajectory

# (criterion, passed, detail) rows filled by the acceptance module
ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "budget(seconds): wall-clock limit for an acceptance criterion")


def pytest_terminal_summary(terminalreporter):
    skipped = [r for r in terminalreporter.stats.get("skipped", []) if "test_acceptance" in r.nodeid]
    if not ACCEPTANCE and not skipped:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
    for r in skipped:
        reason = r.longrepr[2] if isinstance(r.longrepr, tuple) else ""
        terminalreporter.write_line(f"SKIP  {r.nodeid.split('::test_')[-1]}  [{reason.removeprefix('Skipped: ')}]")


def make_traj(v, dt=0.1, a=None, vehicle_id="C1", t0=0.0, **kw):
    v = np.asarray(v, dtype=float)
    t = t0 + dt * np.arange(v.size)
    return Trajectory(vehicle_id=vehicle_id, t=t, v=v, a=a, **kw)


def cruise(speed=20.0, duration=60.0, dt=0.1, vehicle_id="C1"):
    n = int(round(duration / dt)) + 1
    t = dt * np.arange(n)
    return Trajectory(vehicle_id=vehicle_id, t=t, v=np.full(n, speed), a=np.zeros(n), s=speed * t,
                      theta=np.zeros(n))


def platoon_from(trajs, ivs=None, **kw):
    return PlatoonDataset(vehicles=tuple(trajs), ivs=ivs or {}, **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
