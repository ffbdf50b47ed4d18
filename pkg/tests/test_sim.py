import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from platoon_energy.analysis import l2_amplification, segment_steady_perturbation
from platoon_energy.energy import VehicleParams, tractive_energy
from platoon_energy.scenario import load_preset
from platoon_energy.sim import (
    AccControllerParams,
    Collision,
    HumanModelParams,
    InfeasibleCycle,
    LeaderCycle,
    PidState,
    SpeedEvent,
    VehicleState,
    generate_leader,
    simulate_platoon,
    step_acc_follower,
    step_human_follower,
    transfer_gain,
)

STABLE = AccControllerParams(kp=1.6, ki=0.02, kd=0.6)
UNSTABLE = AccControllerParams(kp=0.3, ki=0.02, kd=0.3)
PULSE = LeaderCycle(25.0, 150.0, (SpeedEvent(50.0, 20.0, 1.0), SpeedEvent(55.0, 25.0, 1.0)))


class TestLeader:
    def test_no_events(self):
        tr = generate_leader(LeaderCycle(17.0, 30.0), dt=0.1)
        assert np.all(tr.v == 17.0) and np.all(tr.a == 0.0)
        assert np.allclose(tr.s, 17.0 * tr.t)

    def test_single_ramp_closed_form(self):
        tr = generate_leader(LeaderCycle(20.0, 40.0, (SpeedEvent(10.0, 10.0, 2.0),)), dt=0.1)
        t = tr.t
        tau = np.clip(t - 10.0, 0.0, 5.0)
        v = 20.0 - 2.0 * tau
        s = 20.0 * np.minimum(t, 10.0) + 20.0 * tau - tau**2 + 10.0 * np.maximum(t - 15.0, 0.0)
        assert np.allclose(tr.v, v, atol=1e-12)
        assert np.allclose(tr.s, s, atol=1e-9)
        assert tr.s[-1] == pytest.approx(200 + 75 + 250)

    def test_overlapping_ramps(self):
        cycle = LeaderCycle(20.0, 60.0, (SpeedEvent(10.0, 10.0, 1.0), SpeedEvent(15.0, 20.0, 1.0)))
        with pytest.raises(InfeasibleCycle, match="event 0"):
            generate_leader(cycle)

    def test_speed_is_continuous(self):
        tr = generate_leader(load_preset("levels-acc").cycle, dt=0.1)
        assert np.max(np.abs(np.diff(tr.v))) <= 0.5 * 0.1 + 1e-12


class TestAccStep:
    def test_equilibrium_command_is_zero(self):
        p = AccControllerParams()
        v = 20.0
        ego = VehicleState(v, 0.0)
        lead = VehicleState(v, 5.0 + p.desired_gap(v))
        assert step_acc_follower(ego, lead, p, 0.05, PidState()) == 0.0

    def test_saturation(self):
        p = AccControllerParams(kp=10.0)
        state = PidState()
        assert step_acc_follower(VehicleState(20, 0), VehicleState(20, 500), p, 0.05, state) == p.a_max
        assert state.integral == 0.0
        assert step_acc_follower(VehicleState(20, 0), VehicleState(20, 8), p, 0.05, state) == p.a_min

    def test_set_speed_cap(self):
        p = AccControllerParams(v_set=20.0)
        cmd = step_acc_follower(VehicleState(19.99, 0), VehicleState(30, 500), p, 0.05)
        assert 19.99 + 0.05 * cmd == pytest.approx(20.0)

    def test_collision(self):
        with pytest.raises(Collision):
            step_acc_follower(VehicleState(20, 0), VehicleState(20, 4.0), AccControllerParams(), 0.05)

    def test_settles_to_cth_gap(self):
        p = AccControllerParams()
        v_lead, h = 22.0, 0.05
        lead_s, ego = 80.0, VehicleState(15.0, 0.0)
        state = PidState()
        for _ in range(int(300 / h)):
            a = step_acc_follower(ego, VehicleState(v_lead, lead_s), p, h, state)
            state.a_prev = a
            ego = VehicleState(ego.v + a * h, ego.s + ego.v * h)
            lead_s += v_lead * h
        gap = lead_s - ego.s - 5.0
        assert abs(gap - p.desired_gap(v_lead)) < 0.1

    def test_aggressive_gain_overshoots(self):
        # with kd = 0 the loop is s^2 + kp T s + kp; under-damped while kp < 4 / T^2
        cycle = LeaderCycle(25.0, 80.0, (SpeedEvent(20.0, 15.0, 2.0),))
        ds = simulate_platoon(cycle, [AccControllerParams(kp=1.0, ki=0.0, kd=0.0)])
        assert ds["C2"].v.min() < 15.0 - 0.1
        assert ds["C2"].v[-1] == pytest.approx(15.0, abs=0.01)


class TestHumanStep:
    def test_free_flow(self):
        p = HumanModelParams()
        assert step_human_follower(VehicleState(p.v0, 0), VehicleState(p.v0, 1e6), p) == pytest.approx(0, abs=1e-8)

    def test_settles_to_equilibrium_gap(self):
        p = HumanModelParams(v0=38.0, a_max=1.5, b=2.0)
        v_lead, h = 25.0, 0.05
        lead_s, ego = 90.0, VehicleState(20.0, 0.0)
        for _ in range(int(300 / h)):
            a = step_human_follower(ego, VehicleState(v_lead, lead_s), p, h)
            ego = VehicleState(ego.v + a * h, ego.s + ego.v * h)
            lead_s += v_lead * h
        s_eq = (p.s0 + v_lead * p.T) / math.sqrt(1 - (v_lead / p.v0) ** p.delta)
        assert abs(lead_s - ego.s - 5.0 - s_eq) < 0.1
        assert p.equilibrium_gap(v_lead) == pytest.approx(s_eq)

    @given(gap=st.floats(3.0, 200.0), dv=st.floats(-5, 5))
    def test_monotone_in_gap(self, gap, dv):
        p = HumanModelParams()
        ego = VehicleState(20.0, 0.0)
        lead = VehicleState(20.0 - dv, 5.0 + gap)
        closer = VehicleState(20.0 - dv, 5.0 + 0.9 * gap)
        a_far = step_human_follower(ego, lead, p)
        a_near = step_human_follower(ego, closer, p)
        assert a_near < a_far or a_near == a_far == -9.0

    def test_floor(self):
        assert step_human_follower(VehicleState(30, 0), VehicleState(0, 5.5), HumanModelParams()) == -9.0


def _ratios(ds, pad):
    labels = segment_steady_perturbation(ds["C1"], pad=pad)
    m = l2_amplification(ds, labels)
    return m, [m.l2_ratio[0][f"C{k}"] for k in range(2, 6)]


class TestPlatoon:
    def test_equilibrium_persistence(self):
        ds = simulate_platoon(LeaderCycle(23.0, 100.0), [AccControllerParams()] * 4)
        for tr in ds.vehicles:
            assert np.allclose(tr.v, 23.0, rtol=0, atol=1e-9)

    def test_braking_pulse_unstable_grows(self):
        m, r = _ratios(simulate_platoon(PULSE, [UNSTABLE] * 4), pad=20.0)
        assert all(b > a for a, b in zip(r, r[1:]))
        assert m.verdict == "amplifying"

    def test_braking_pulse_stable_decays(self):
        _, r = _ratios(simulate_platoon(PULSE, [STABLE] * 4), pad=20.0)
        assert max(r) <= 1.0

    def test_amplifying_platoon_energy_propagates(self):
        ds = simulate_platoon(PULSE, [UNSTABLE] * 4)
        labels = segment_steady_perturbation(ds["C1"], pad=20.0)
        assert l2_amplification(ds, labels).verdict == "amplifying"
        ec = [tractive_energy(ds[f"C{k}"], intervals=labels.spans("perturbation")) for k in range(2, 6)]
        assert all(b >= a for a, b in zip(ec, ec[1:]))

    def test_deterministic(self):
        sc = load_preset("human")
        one = simulate_platoon(sc.cycle, sc.followers, seed=3, noise_std=0.05)
        two = simulate_platoon(sc.cycle, sc.followers, seed=3, noise_std=0.05)
        for a, b in zip(one.vehicles, two.vehicles):
            assert np.array_equal(a.v, b.v) and np.array_equal(a.s, b.s)

    def test_halving_step_converges(self):
        sc = load_preset("stable")
        coarse = simulate_platoon(sc.cycle, sc.followers, dt_internal=0.05)
        fine = simulate_platoon(sc.cycle, sc.followers, dt_internal=0.025)
        for a, b in zip(coarse.vehicles, fine.vehicles):
            assert abs(a.s[-1] - b.s[-1]) < 1e-3 * b.s[-1]

    @settings(max_examples=10, deadline=None)
    @given(kp=st.floats(0.2, 2.0), kd=st.floats(0.0, 0.8), dip=st.floats(5.0, 15.0))
    def test_bounds(self, kp, kd, dip):
        p = AccControllerParams(kp=kp, ki=0.0, kd=kd)
        cycle = LeaderCycle(20.0, 60.0, (SpeedEvent(10.0, 20.0 - dip, 3.0), SpeedEvent(30.0, 20.0, 1.0)))
        try:
            ds = simulate_platoon(cycle, [p] * 3)
        except Collision as exc:
            ds = exc.partial
        for tr in ds.vehicles[1:]:
            assert np.all(tr.v >= 0)
            assert np.all(tr.a >= p.a_min - 1e-12) and np.all(tr.a <= p.a_max + 1e-12)

    def test_human_accel_bounds(self):
        sc = load_preset("human")
        ds = simulate_platoon(sc.cycle, sc.followers)
        p = sc.followers[0]
        for tr in ds.vehicles[1:]:
            assert np.all(tr.v >= 0)
            assert np.all(tr.a >= -9.0) and np.all(tr.a <= p.a_max + 1e-12)

    def test_grade_causes_speed_dip(self):
        hill = ((2000.0, 0.0), (2100.0, 0.04), (2600.0, 0.04), (2700.0, 0.0))
        ds = simulate_platoon(LeaderCycle(22.0, 200.0, grade=hill), [UNSTABLE] * 2)
        assert np.all(ds["C1"].v == 22.0)
        assert ds["C2"].v.min() < 22.0 - 0.1
        assert ds["C2"].v.max() > 22.0 + 0.01

    def test_collision_partial_output(self):
        cycle = LeaderCycle(30.0, 60.0, (SpeedEvent(10.0, 0.0, 8.0),))
        lazy = AccControllerParams(kp=0.05, ki=0.0, kd=0.0, a_min=-1.0)
        with pytest.raises(Collision) as err:
            simulate_platoon(cycle, [lazy] * 2)
        exc = err.value
        assert exc.vehicle_id == "C2"
        assert exc.partial is not None
        assert exc.partial.t[-1] <= exc.time + 0.1
        assert exc.time > 10.0

    def test_follower_needs_more_energy_than_leader(self):
        sc = load_preset("unstable")
        ds = simulate_platoon(sc.cycle, sc.followers)
        fine = simulate_platoon(sc.cycle, sc.followers, dt=0.01, dt_internal=0.01)
        for d in (ds, fine):
            assert tractive_energy(d["C5"], VehicleParams()) > tractive_energy(d["C1"], VehicleParams())


def test_preset_gains_against_linear_analysis():
    omega = 2 * math.pi / 20.0
    stable, unstable = load_preset("stable").followers[0], load_preset("unstable").followers[0]
    assert transfer_gain(unstable, omega) > 1.0
    assert transfer_gain(stable, omega) < 1.0
    grid = np.logspace(-4, 1, 2000)
    assert max(transfer_gain(stable, w) for w in grid) <= 1.0
    # ki = 0 criterion for the proportional-derivative part
    assert stable.kp * stable.T**2 >= 2 > unstable.kp * unstable.T**2


def test_transfer_gain_unit_at_dc():
    assert transfer_gain(STABLE, 1e-9) == pytest.approx(1.0, abs=1e-6)
