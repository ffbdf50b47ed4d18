"""Platoon trajectory containers and kinematic derivations.

Trajectories hold one vehicle's samples as numpy arrays on a (usually
uniform) time grid. All operations return new objects; inputs are never
modified in place.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

DEFAULT_DT = 0.1
DEFAULT_ACCEL_WINDOW = 5
DEFAULT_GRADE_HALF_WINDOW = 5
DEFAULT_VEHICLE_LENGTH = 5.0
MIN_GRADE_BASE = 0.5  # m of travel below which the grade is carried forward


class DataError(ValueError):
    """Input data that violates a trajectory invariant.

    ``row`` and ``column`` locate the offending CSV cell when known,
    ``time`` the offending sample time.
    """

    def __init__(self, message, *, row=None, column=None, time=None):
        super().__init__(message)
        self.row = row
        self.column = column
        self.time = time


class GradeWarning(UserWarning):
    pass


class DrivingMode(str, Enum):
    HUMAN = "Human"
    ACC = "ACC"
    MIXED = "Mixed"


def _as_array(x):
    if x is None:
        return None
    arr = np.asarray(x, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Time-stamped kinematic state of one vehicle.

    ``t`` [s] and ``v`` [m/s] are mandatory. ``a`` [m/s^2], ``s`` [m],
    ``h`` [m] and ``theta`` [rad] are optional channels of the same length.
    ``s`` is a position along the road; within a platoon all vehicles share
    the same origin so that spacings can be taken as differences.
    """

    vehicle_id: str
    t: np.ndarray
    v: np.ndarray
    a: np.ndarray | None = None
    s: np.ndarray | None = None
    h: np.ndarray | None = None
    theta: np.ndarray | None = None
    grade_missing: bool = False

    def __post_init__(self):
        for name in ("t", "v", "a", "s", "h", "theta"):
            object.__setattr__(self, name, _as_array(getattr(self, name)))
        n = self.t.shape[0]
        if self.t.ndim != 1:
            raise DataError(f"{self.vehicle_id}: time must be one-dimensional")
        for name in ("v", "a", "s", "h", "theta"):
            arr = getattr(self, name)
            if arr is not None and arr.shape != (n,):
                raise DataError(
                    f"{self.vehicle_id}: channel {name!r} has shape {arr.shape}, expected ({n},)"
                )
        if n > 1 and np.any(np.diff(self.t) < 0):
            i = int(np.argmax(np.diff(self.t) < 0)) + 1
            raise DataError(f"{self.vehicle_id}: time decreases at sample {i}", time=float(self.t[i]))
        if np.any(np.isnan(self.v)):
            raise DataError(f"{self.vehicle_id}: missing speed values")
        if np.any(self.v < 0):
            i = int(np.argmax(self.v < 0))
            raise DataError(f"{self.vehicle_id}: negative speed at t={self.t[i]}", time=float(self.t[i]))
        if self.s is not None and n > 1 and np.any(np.diff(self.s) < -1e-9):
            i = int(np.argmax(np.diff(self.s) < -1e-9)) + 1
            raise DataError(f"{self.vehicle_id}: position decreases at t={self.t[i]}", time=float(self.t[i]))
        if self.theta is not None and np.any(np.abs(self.theta) >= math.pi / 2):
            raise DataError(f"{self.vehicle_id}: grade outside (-pi/2, pi/2)")

    def __len__(self):
        return self.t.shape[0]

    @property
    def dt(self) -> float:
        """Median sample step; equals the grid step on a uniform grid."""
        if len(self) < 2:
            raise DataError(f"{self.vehicle_id}: need at least two samples for a time step")
        return float(np.median(np.diff(self.t)))

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0])

    def is_uniform(self, dt=None, rtol=1e-9) -> bool:
        if len(self) < 2:
            return False
        steps = np.diff(self.t)
        step = self.dt if dt is None else dt
        return bool(np.allclose(steps, step, rtol=0, atol=rtol * max(1.0, abs(step)) + 1e-12))

    def grade(self) -> np.ndarray:
        """Grade channel, zeros where none was derived."""
        return self.theta if self.theta is not None else np.zeros_like(self.v)

    def acceleration(self) -> np.ndarray:
        if self.a is None:
            raise DataError(f"{self.vehicle_id}: acceleration not derived")
        return self.a

    def window(self, t_start, t_end) -> "Trajectory":
        """Samples with ``t_start <= t <= t_end``."""
        mask = (self.t >= t_start) & (self.t <= t_end)
        return self._masked(mask)

    def _masked(self, mask):
        kw = {}
        for name in ("t", "v", "a", "s", "h", "theta"):
            arr = getattr(self, name)
            kw[name] = None if arr is None else arr[mask]
        return replace(self, **kw)


@dataclass(frozen=True, eq=False)
class PlatoonDataset:
    """Synchronised platoon trajectories; ``vehicles[0]`` is the leader.

    ``ivs`` maps ``(leader_id, follower_id)`` of each consecutive pair to the
    bumper-to-bumper spacing series [m].
    """

    vehicles: tuple[Trajectory, ...]
    ivs: dict = field(default_factory=dict)
    mode_label: DrivingMode = DrivingMode.MIXED
    name: str = ""
    direction: str = ""
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "vehicles", tuple(self.vehicles))
        object.__setattr__(self, "mode_label", DrivingMode(self.mode_label))
        object.__setattr__(self, "ivs", {k: _as_array(v) for k, v in self.ivs.items()})
        ids = [tr.vehicle_id for tr in self.vehicles]
        if len(set(ids)) != len(ids):
            raise DataError(f"duplicate vehicle ids: {ids}")
        for key, series in self.ivs.items():
            if key not in self.pairs:
                raise DataError(f"spacing {key} is not a consecutive pair of {ids}")
            if series.shape != self.vehicles[0].t.shape:
                raise DataError(f"spacing {key} does not match the time grid")

    @property
    def ids(self) -> list[str]:
        return [tr.vehicle_id for tr in self.vehicles]

    @property
    def pairs(self) -> list[tuple[str, str]]:
        ids = self.ids
        return list(zip(ids[:-1], ids[1:]))

    @property
    def t(self) -> np.ndarray:
        return self.vehicles[0].t

    def __getitem__(self, vehicle_id) -> Trajectory:
        for tr in self.vehicles:
            if tr.vehicle_id == vehicle_id:
                return tr
        raise KeyError(vehicle_id)

    def is_synchronised(self) -> bool:
        t0 = self.vehicles[0].t
        return all(tr.t.shape == t0.shape and np.array_equal(tr.t, t0) for tr in self.vehicles)

    def with_vehicles(self, vehicles) -> "PlatoonDataset":
        return replace(self, vehicles=tuple(vehicles))


def integrate(y, t) -> float:
    """Trapezoidal integral of ``y`` over ``t``."""
    return float(np.trapezoid(np.asarray(y, dtype=float), np.asarray(t, dtype=float)))


def travelled_distance(traj: Trajectory) -> float:
    return integrate(traj.v, traj.t)


def cumulative_distance(traj: Trajectory) -> np.ndarray:
    steps = 0.5 * (traj.v[1:] + traj.v[:-1]) * np.diff(traj.t)
    return np.concatenate(([0.0], np.cumsum(steps)))


def uniform_grid(t_first, t_last, dt) -> np.ndarray:
    n = int(math.floor((t_last - t_first) / dt + 1e-9))
    return t_first + dt * np.arange(n + 1)


def resample(traj: Trajectory, dt: float = DEFAULT_DT) -> Trajectory:
    """Linearly interpolate every recorded channel onto a uniform grid.

    The grid starts at the first sample and steps by ``dt`` up to the last
    sample. A trajectory already on that grid is returned unchanged.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if len(traj) < 2:
        raise DataError(f"{traj.vehicle_id}: need at least two samples to resample")
    if dt > traj.duration:
        raise DataError(f"{traj.vehicle_id}: dt={dt} exceeds the duration {traj.duration}")
    if traj.is_uniform(dt):
        return traj
    grid = uniform_grid(traj.t[0], traj.t[-1], dt)
    kw = {"t": grid}
    for name in ("v", "a", "s", "h", "theta"):
        arr = getattr(traj, name)
        kw[name] = None if arr is None else np.interp(grid, traj.t, arr)
    return replace(traj, **kw)


def _centered_mean(x, window):
    """Moving average whose window shrinks symmetrically near the ends."""
    if window == 1:
        return x.copy()
    half = window // 2
    n = x.shape[0]
    c = np.concatenate(([0.0], np.cumsum(x)))
    idx = np.arange(n)
    reach = np.minimum(np.minimum(idx, n - 1 - idx), half)
    return (c[idx + reach + 1] - c[idx - reach]) / (2 * reach + 1)


def derive_acceleration(traj: Trajectory, window: int = DEFAULT_ACCEL_WINDOW, force: bool = False) -> Trajectory:
    """Differentiate speed into acceleration.

    Centered differences in the interior, one-sided at the ends, followed by
    a centered moving average of ``window`` samples. A recorded acceleration
    is kept unless ``force`` is set.
    """
    if traj.a is not None and not force:
        return traj
    if window < 1 or window % 2 == 0:
        raise ValueError("window must be an odd integer >= 1")
    if len(traj) < max(window, 2):
        raise DataError(f"{traj.vehicle_id}: {len(traj)} samples, fewer than the window {window}")
    spacing = traj.dt if traj.is_uniform() else traj.t
    a = np.gradient(traj.v, spacing, edge_order=1)
    return replace(traj, a=_centered_mean(a, window))


def derive_grade(traj: Trajectory, half_window: int = DEFAULT_GRADE_HALF_WINDOW) -> Trajectory:
    """Road grade from altitude over travelled distance, ``atan(dh/ds)``.

    The difference quotient spans ``half_window`` samples on each side.
    Where the vehicle covers less than 0.5 m over that span the previous
    grade is carried forward. Without altitude the grade is zero and
    ``grade_missing`` is set.
    """
    if traj.h is None:
        warnings.warn(f"{traj.vehicle_id}: no altitude, grade set to zero", GradeWarning, stacklevel=2)
        return replace(traj, theta=np.zeros_like(traj.v), grade_missing=True)
    s = traj.s if traj.s is not None else cumulative_distance(traj)
    n = len(traj)
    idx = np.arange(n)
    lo = np.maximum(idx - half_window, 0)
    hi = np.minimum(idx + half_window, n - 1)
    ds = s[hi] - s[lo]
    dh = traj.h[hi] - traj.h[lo]
    valid = ds >= MIN_GRADE_BASE
    theta = np.zeros(n)
    theta[valid] = np.arctan(dh[valid] / ds[valid])
    if valid.any():
        first = int(np.argmax(valid))
        theta[:first] = theta[first]
        last = theta[first]
        for i in range(first, n):
            if valid[i]:
                last = theta[i]
            else:
                theta[i] = last
    return replace(traj, theta=theta, grade_missing=False)


def compute_ivs(dataset: PlatoonDataset, length: float = DEFAULT_VEHICLE_LENGTH) -> PlatoonDataset:
    """Fill in missing inter-vehicle spacings from positions.

    ``ivs = s_leader - s_follower - length``. Spacings already present pass
    through unchanged. A non-positive spacing is a data inconsistency.
    """
    if not dataset.is_synchronised():
        raise DataError("trajectories are not on a common time grid")
    ivs = dict(dataset.ivs)
    for lead, fol in dataset.pairs:
        if (lead, fol) in ivs:
            continue
        s_l, s_f = dataset[lead].s, dataset[fol].s
        if s_l is None or s_f is None:
            raise DataError(f"pair {lead}-{fol}: no spacing and no positions to derive it")
        gap = s_l - s_f - length
        bad = gap <= 0
        if bad.any():
            i = int(np.argmax(bad))
            t_bad = float(dataset.t[i])
            raise DataError(
                f"pair {lead}-{fol}: non-positive spacing {gap[i]:.3f} m at t={t_bad}", time=t_bad
            )
        ivs[(lead, fol)] = gap
    return replace(dataset, ivs=ivs)


def prepare(dataset: PlatoonDataset, dt: float = DEFAULT_DT, window: int = DEFAULT_ACCEL_WINDOW,
            length: float = DEFAULT_VEHICLE_LENGTH) -> PlatoonDataset:
    """Resample, derive acceleration and grade, and complete the spacings."""
    vehicles = []
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", GradeWarning)
        for tr in dataset.vehicles:
            tr = resample(tr, dt)
            tr = derive_acceleration(tr, window)
            if tr.theta is None:
                tr = derive_grade(tr)
            vehicles.append(tr)
    t_ref = vehicles[0].t
    for tr in vehicles[1:]:
        if tr.t.shape != t_ref.shape or not np.allclose(tr.t, t_ref):
            raise DataError(f"{tr.vehicle_id}: time grid differs from the leader's")
    ivs = {}
    for key, series in dataset.ivs.items():
        ivs[key] = np.interp(t_ref, dataset.vehicles[0].t, series)
    out = compute_ivs(replace(dataset, vehicles=tuple(vehicles), ivs=ivs), length)
    # odometer fill-in happens after the spacings: it has no common origin
    filled = [tr if tr.s is not None else replace(tr, s=cumulative_distance(tr)) for tr in out.vehicles]
    return replace(out, vehicles=tuple(filled))
