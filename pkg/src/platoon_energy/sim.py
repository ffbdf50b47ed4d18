"""Synthetic platoons: a scripted leader followed by ACC or IDM vehicles.

ACC followers run a PID controller on the spacing error of a constant
time-headway policy; human-like followers use the Intelligent Driver Model.
The chain is integrated with forward Euler.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .trajectory import DrivingMode, PlatoonDataset, Trajectory, resample

G = 9.81
HUMAN_MIN_ACCEL = -9.0


class InfeasibleCycle(ValueError):
    pass


class Collision(RuntimeError):
    """A follower closed its gap; ``partial`` holds the run up to ``time``."""

    def __init__(self, message, time, vehicle_id, partial=None):
        super().__init__(message)
        self.time = time
        self.vehicle_id = vehicle_id
        self.partial = partial


@dataclass(frozen=True)
class SpeedEvent:
    t_start: float
    target_speed: float
    accel: float

    def __post_init__(self):
        if self.target_speed < 0:
            raise ValueError("target speed must be non-negative")
        if not self.accel > 0:
            raise ValueError("accel magnitude must be positive")


@dataclass(frozen=True)
class LeaderCycle:
    """Leader drive: ``base_speed`` interrupted by speed-change events.

    ``grade`` is a list of ``(position, theta)`` breakpoints, linearly
    interpolated and held flat beyond the ends.
    """

    base_speed: float
    duration: float
    events: tuple[SpeedEvent, ...] = ()
    grade: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "events", tuple(sorted(self.events, key=lambda e: e.t_start)))
        object.__setattr__(self, "grade", tuple(tuple(g) for g in self.grade))
        if self.base_speed < 0:
            raise ValueError("base speed must be non-negative")
        if not self.duration > 0:
            raise ValueError("duration must be positive")

    def grade_at(self, s):
        if not self.grade:
            return np.zeros_like(np.asarray(s, dtype=float))
        pts = np.asarray(self.grade, dtype=float)
        return np.interp(s, pts[:, 0], pts[:, 1])

    def knots(self) -> list[tuple[float, float]]:
        """Corners ``(t, v)`` of the piecewise-linear speed profile."""
        pts = [(0.0, self.base_speed)]
        v = self.base_speed
        for k, ev in enumerate(self.events):
            if ev.t_start < pts[-1][0] - 1e-9:
                raise InfeasibleCycle(f"event {k} at t={ev.t_start} starts before the previous ramp ends")
            if ev.t_start > pts[-1][0]:
                pts.append((ev.t_start, v))
            t_end = ev.t_start + abs(ev.target_speed - v) / ev.accel
            nxt = self.events[k + 1].t_start if k + 1 < len(self.events) else self.duration
            if t_end > nxt + 1e-9:
                raise InfeasibleCycle(
                    f"event {k} (t={ev.t_start}, target {ev.target_speed} m/s) cannot finish before t={nxt}"
                )
            if t_end > ev.t_start:
                pts.append((t_end, ev.target_speed))
            v = ev.target_speed
        if self.duration > pts[-1][0]:
            pts.append((self.duration, v))
        return pts


def generate_leader(cycle: LeaderCycle, dt: float = 0.1, vehicle_id: str = "C1", s0: float = 0.0) -> Trajectory:
    """Exact piecewise-constant-acceleration leader trajectory on a grid."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    knots = cycle.knots()
    kt = np.array([k[0] for k in knots])
    kv = np.array([k[1] for k in knots])
    seg_a = np.diff(kv) / np.diff(kt)
    seg_s = np.concatenate(([s0], s0 + np.cumsum(0.5 * (kv[1:] + kv[:-1]) * np.diff(kt))))

    n = int(math.floor(cycle.duration / dt + 1e-9))
    t = dt * np.arange(n + 1)
    idx = np.clip(np.searchsorted(kt, t, side="right") - 1, 0, kt.size - 2)
    tau = t - kt[idx]
    a = seg_a[idx]
    v = np.maximum(kv[idx] + a * tau, 0.0)
    s = seg_s[idx] + kv[idx] * tau + 0.5 * a * tau**2
    return Trajectory(vehicle_id=vehicle_id, t=t, v=v, a=a, s=s, theta=cycle.grade_at(s))


@dataclass(frozen=True)
class AccControllerParams:
    T: float = 1.2
    s0: float = 2.0
    kp: float = 0.3
    ki: float = 0.0
    kd: float = 0.3
    a_min: float = -3.0
    a_max: float = 2.0
    v_set: float = 40.0

    def __post_init__(self):
        if not self.T > 0:
            raise ValueError("T must be positive")
        if not self.a_min < 0 < self.a_max:
            raise ValueError("need a_min < 0 < a_max")
        if not all(math.isfinite(x) for x in (self.kp, self.ki, self.kd)):
            raise ValueError("gains must be finite")

    def desired_gap(self, v):
        return self.s0 + self.T * v


@dataclass(frozen=True)
class HumanModelParams:
    v0: float = 33.0
    T: float = 1.5
    s0: float = 2.0
    a_max: float = 1.0
    b: float = 1.5
    delta: float = 4.0

    def __post_init__(self):
        if min(self.v0, self.T, self.s0, self.a_max, self.b) <= 0:
            raise ValueError("IDM parameters must be positive")
        if self.delta < 1:
            raise ValueError("IDM exponent must be >= 1")

    def equilibrium_gap(self, v: float) -> float:
        """Gap at which a follower at constant speed ``v`` stays put."""
        ratio = 1.0 - (v / self.v0) ** self.delta
        if ratio <= 0:
            raise ValueError(f"no equilibrium at or above the desired speed ({v} >= {self.v0})")
        return (self.s0 + v * self.T) / math.sqrt(ratio)


@dataclass
class PidState:
    integral: float = 0.0
    a_prev: float = 0.0


@dataclass(frozen=True)
class VehicleState:
    v: float
    s: float


def step_acc_follower(ego: VehicleState, leader: VehicleState, p: AccControllerParams, dt: float,
                      state: PidState | None = None, length: float = 5.0) -> float:
    """Acceleration command of the CTH-PID controller.

    The derivative acts on the gap-closing rate minus the headway term's
    own rate. ``state`` carries the integral and the previous acceleration
    and is updated in place; the integral is frozen while the command is
    saturated. The command never drives speed above ``v_set`` or below zero.
    """
    state = state if state is not None else PidState()
    gap = leader.s - ego.s - length
    if gap <= 0:
        raise Collision(f"non-positive gap {gap:.3f} m", time=float("nan"), vehicle_id="")
    e = gap - p.desired_gap(ego.v)
    e_dot = (leader.v - ego.v) - p.T * state.a_prev
    raw = p.kp * e + p.ki * (state.integral + e * dt) + p.kd * e_dot
    cmd = min(max(raw, p.a_min), p.a_max)
    if cmd == raw:
        state.integral += e * dt
    if ego.v + cmd * dt > p.v_set:
        cmd = max(p.a_min, (p.v_set - ego.v) / dt)
    if ego.v + cmd * dt < 0:
        cmd = -ego.v / dt
    return cmd


def step_human_follower(ego: VehicleState, leader: VehicleState, p: HumanModelParams, dt: float = 0.0,
                        length: float = 5.0) -> float:
    """IDM acceleration, bounded below by -9 m/s^2."""
    gap = leader.s - ego.s - length
    if gap <= 0:
        raise Collision(f"non-positive gap {gap:.3f} m", time=float("nan"), vehicle_id="")
    dv = ego.v - leader.v
    s_star = p.s0 + max(0.0, ego.v * p.T + ego.v * dv / (2.0 * math.sqrt(p.a_max * p.b)))
    acc = p.a_max * (1.0 - (ego.v / p.v0) ** p.delta - (s_star / gap) ** 2)
    acc = max(acc, HUMAN_MIN_ACCEL)
    if dt > 0 and ego.v + acc * dt < 0:
        acc = -ego.v / dt
    return acc


def initial_gap(params, v: float) -> float:
    if isinstance(params, AccControllerParams):
        return params.desired_gap(v)
    return params.equilibrium_gap(v)


@dataclass(frozen=True)
class Scenario:
    cycle: LeaderCycle
    followers: tuple = ()
    dt: float = 0.1
    dt_internal: float = 0.05
    length: float = 5.0
    seed: int | None = None
    noise_std: float = 0.0
    name: str = ""
    meta: dict = field(default_factory=dict)


def _mode(followers) -> DrivingMode:
    kinds = {type(p) for p in followers}
    if kinds == {AccControllerParams}:
        return DrivingMode.ACC
    if kinds == {HumanModelParams}:
        return DrivingMode.HUMAN
    return DrivingMode.MIXED


def simulate_platoon(cycle: LeaderCycle, followers, dt: float = 0.1, length: float = 5.0,
                     dt_internal: float = 0.05, seed: int | None = None, noise_std: float = 0.0,
                     name: str = "") -> PlatoonDataset:
    """Run the leader and its followers and return the platoon on a ``dt`` grid.

    Followers start at their controller's equilibrium behind the leader's
    initial speed. Grade acts on each follower as ``-g sin(theta)`` on top of
    the commanded acceleration. With ``noise_std > 0`` a seeded Gaussian
    acceleration disturbance is added to human followers. Raises
    :class:`Collision` carrying the partial dataset if any gap closes.
    """
    followers = list(followers)
    if not followers:
        raise ValueError("need at least one follower")
    if not dt_internal > 0 or dt_internal > dt:
        raise ValueError("dt_internal must be positive and no larger than dt")
    lead = generate_leader(cycle, dt_internal)
    n = len(lead)
    ids = [f"C{k + 1}" for k in range(len(followers) + 1)]
    rng = np.random.default_rng(seed) if noise_std > 0 else None

    v0 = float(lead.v[0])
    offsets = [0.0]
    for p in followers:
        offsets.append(offsets[-1] + initial_gap(p, v0) + length)
    total = offsets[-1]
    lead = generate_leader(cycle, dt_internal, vehicle_id=ids[0], s0=total)

    m = len(followers)
    v = np.zeros((m, n))
    s = np.zeros((m, n))
    acc = np.zeros((m, n))
    v[:, 0] = v0
    s[:, 0] = [total - off for off in offsets[1:]]
    states = [PidState() for _ in followers]
    h = dt_internal
    end = n
    collision = None
    for k in range(n - 1):
        for i, p in enumerate(followers):
            ego = VehicleState(v[i, k], s[i, k])
            front = VehicleState(lead.v[k], lead.s[k]) if i == 0 else VehicleState(v[i - 1, k], s[i - 1, k])
            try:
                if isinstance(p, AccControllerParams):
                    cmd = step_acc_follower(ego, front, p, h, states[i], length)
                else:
                    cmd = step_human_follower(ego, front, p, h, length)
                    if rng is not None:
                        cmd += rng.normal(0.0, noise_std)
            except Collision:
                collision = (float(lead.t[k]), ids[i + 1])
                break
            theta = float(cycle.grade_at(s[i, k])) if cycle.grade else 0.0
            achieved = cmd - G * math.sin(theta)
            if v[i, k] + achieved * h < 0:
                achieved = -v[i, k] / h
            acc[i, k] = achieved
            states[i].a_prev = achieved
            v[i, k + 1] = v[i, k] + achieved * h
            s[i, k + 1] = s[i, k] + v[i, k] * h
        if collision:
            end = k + 1
            break
    if end == n:
        acc[:, -1] = acc[:, -2]

    vehicles = [lead.window(lead.t[0], lead.t[end - 1])]
    for i in range(m):
        pos = s[i, :end]
        vehicles.append(Trajectory(vehicle_id=ids[i + 1], t=lead.t[:end], v=v[i, :end], a=acc[i, :end],
                                   s=pos, theta=cycle.grade_at(pos)))
    if end >= 2 and dt != dt_internal:
        ratio = dt / dt_internal
        if abs(ratio - round(ratio)) < 1e-9:
            step = int(round(ratio))
            vehicles = [tr._masked(slice(None, None, step)) for tr in vehicles]
        elif lead.t[end - 1] >= dt:
            vehicles = [resample(tr, dt) for tr in vehicles]
    ivs = {}
    for (a_id, b_id), fa, fb in zip(zip(ids[:-1], ids[1:]), vehicles[:-1], vehicles[1:]):
        ivs[(a_id, b_id)] = fa.s - fb.s - length
    data = PlatoonDataset(vehicles=tuple(vehicles), ivs=ivs, mode_label=_mode(followers), name=name)
    if collision:
        t_c, vid = collision
        raise Collision(f"{vid} collided with its predecessor at t={t_c:.2f} s", t_c, vid, data)
    return data


def run_scenario(sc: Scenario) -> PlatoonDataset:
    return simulate_platoon(sc.cycle, sc.followers, sc.dt, sc.length, sc.dt_internal, sc.seed,
                            sc.noise_std, sc.name)


def transfer_gain(p: AccControllerParams, omega: float) -> float:
    """|G(j omega)| of the linearised CTH-PID follower, leader speed to own speed.

    For a homogeneous chain the same gain links successive spacing errors,
    so values above one mean disturbances grow upstream at that frequency.
    """
    s = 1j * omega
    num = p.kd * s**2 + p.kp * s + p.ki
    den = (1 + p.kd * p.T) * s**3 + (p.kp * p.T + p.kd) * s**2 + (p.kp + p.ki * p.T) * s + p.ki
    return float(abs(num / den))
