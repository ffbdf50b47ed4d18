"""Tractive energy and instantaneous fuel-rate models.

Four instantaneous models are provided: tractive power at the wheels and
three fuel-rate maps (VT-micro, VSP, ARRB). Every fuel-rate function returns
litres per second so that a single per-distance aggregation serves all of
them. Rate functions accept scalars or numpy arrays.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from importlib import resources

import numpy as np

from .trajectory import DataError, PlatoonDataset, Trajectory, integrate

G = 9.81
ROTATIONAL_MASS_FACTOR = 1.03
KWH_PER_100KM = 0.036  # kW*s / m -> kWh/100 km
L_PER_100KM = 1e-5  # L / m -> L/100 km


class ZeroDistanceError(DataError):
    pass


def _load_defaults() -> dict:
    text = resources.files("platoon_energy").joinpath("data/defaults.json").read_text()
    return json.loads(text)


DEFAULTS = _load_defaults()


@dataclass(frozen=True)
class VehicleParams:
    m: float = DEFAULTS["vehicle"]["m"]
    F0: float = DEFAULTS["vehicle"]["F0"]
    F1: float = DEFAULTS["vehicle"]["F1"]
    F2: float = DEFAULTS["vehicle"]["F2"]
    g: float = DEFAULTS["vehicle"]["g"]
    L: float = DEFAULTS["vehicle"]["L"]

    def __post_init__(self):
        if not self.m > 0:
            raise ValueError("mass must be positive")
        if min(self.F0, self.F1, self.F2) < 0:
            raise ValueError("road-load coefficients must be non-negative")
        if self.g != G:
            raise ValueError(f"g is fixed at {G}")


@dataclass(frozen=True)
class VtMicroCoefficients:
    """``K[i][j]`` multiplies ``v**i * a**j`` inside the exponent."""

    K: tuple[tuple[float, ...], ...] = tuple(tuple(row) for row in DEFAULTS["vt_micro"]["K"])

    def __post_init__(self):
        K = tuple(tuple(float(x) for x in row) for row in self.K)
        if len(K) != 4 or any(len(row) != 4 for row in K):
            raise ValueError("VT-micro needs a 4x4 coefficient matrix")
        object.__setattr__(self, "K", K)

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.K)


@dataclass(frozen=True)
class VspParams:
    f: float = DEFAULTS["vsp"]["f"]
    alpha: float = DEFAULTS["vsp"]["alpha"]
    beta: float = DEFAULTS["vsp"]["beta"]
    gamma: float = DEFAULTS["vsp"]["gamma"]
    delta: float = DEFAULTS["vsp"]["delta"]
    epsilon: float = DEFAULTS["vsp"]["epsilon"]
    rho: float = DEFAULTS["vsp"]["rho"]
    lower: float = DEFAULTS["vsp"]["lower"]
    upper: float = DEFAULTS["vsp"]["upper"]

    def __post_init__(self):
        if not self.rho > 0:
            raise ValueError("fuel density must be positive")
        if not self.lower < self.upper:
            raise ValueError("VSP mode bounds must satisfy lower < upper")


@dataclass(frozen=True)
class ArrbParams:
    beta1: float = DEFAULTS["arrb"]["beta1"]
    beta2: float = DEFAULTS["arrb"]["beta2"]
    beta3: float = DEFAULTS["arrb"]["beta3"]
    beta4: float = DEFAULTS["arrb"]["beta4"]
    gamma1: float = DEFAULTS["arrb"]["gamma1"]
    gamma2: float = DEFAULTS["arrb"]["gamma2"]


@dataclass(frozen=True)
class ModelSet:
    """One coefficient set for every model, applied uniformly to a platoon."""

    vehicle: VehicleParams = field(default_factory=VehicleParams)
    vt_micro: VtMicroCoefficients = field(default_factory=VtMicroCoefficients)
    vsp: VspParams = field(default_factory=VspParams)
    arrb: ArrbParams = field(default_factory=ArrbParams)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelSet":
        """Build from a mapping whose sections mirror the dataclass fields.

        Missing sections and keys fall back to the bundled defaults.
        """
        known = {"vehicle": VehicleParams, "vt_micro": VtMicroCoefficients, "vsp": VspParams, "arrb": ArrbParams}
        unknown = set(data) - set(known) - {"version"}
        if unknown:
            raise ValueError(f"unknown coefficient sections: {sorted(unknown)}")
        kw = {}
        for name, klass in known.items():
            section = data.get(name, {})
            allowed = {f.name for f in fields(klass)}
            bad = set(section) - allowed
            if bad:
                raise ValueError(f"{name}: unknown keys {sorted(bad)}")
            kw[name] = klass(**section)
        return cls(**kw)

    def to_dict(self) -> dict:
        out = {k: asdict(v) for k, v in (("vehicle", self.vehicle), ("vt_micro", self.vt_micro),
                                        ("vsp", self.vsp), ("arrb", self.arrb))}
        out["vt_micro"]["K"] = [list(row) for row in self.vt_micro.K]
        out["version"] = DEFAULTS["version"]
        return out

    def with_mass(self, m: float) -> "ModelSet":
        return replace(self, vehicle=replace(self.vehicle, m=m))


def tractive_power(v, a, theta=0.0, p: VehicleParams = VehicleParams()):
    """Power demanded at the wheels [kW], clamped at zero.

    Road load plus inertial (with a 3% rotating-mass allowance) and grade
    forces, times speed. Braking and coasting demand no power.
    """
    v = np.asarray(v, dtype=float)
    force = p.F0 + p.F1 * v + p.F2 * v**2 + ROTATIONAL_MASS_FACTOR * p.m * np.asarray(a) + p.m * p.g * np.sin(theta)
    out = 1e-3 * np.maximum(0.0, force * v)
    return out if out.ndim else float(out)


def vt_micro_rate(v, a, k: VtMicroCoefficients = VtMicroCoefficients()):
    """VT-micro fuel rate [L/s]: exp of a bicubic polynomial in (v, a)."""
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    K = k.matrix
    # Horner in a for each power of v, then Horner in v
    exponent = 0.0
    for i in range(3, -1, -1):
        inner = ((K[i, 3] * a + K[i, 2]) * a + K[i, 1]) * a + K[i, 0]
        exponent = exponent * v + inner
    out = np.exp(exponent)
    return out if out.ndim else float(out)


def vsp_power(v, a, theta=0.0):
    """Vehicle specific power [W/kg].

    The grade enters as the angle itself rather than its sine.
    """
    v = np.asarray(v, dtype=float)
    out = v * (1.1 * np.asarray(a) + 9.81 * np.asarray(theta) + 0.132) + 3.02e-4 * v**3
    return out if out.ndim else float(out)


def vsp_fuel_gps(P, vp: VspParams = VspParams()):
    """Piecewise VSP fuel map in g/s; ``P == upper`` takes the linear branch."""
    P = np.asarray(P, dtype=float)
    low = np.full_like(P, vp.f)
    mid = (vp.alpha * P + vp.beta) * P + vp.gamma
    high = vp.delta * P + vp.epsilon
    out = np.where(P < vp.lower, low, np.where(P < vp.upper, mid, high))
    return out if out.ndim else float(out)


def vsp_rate(P, vp: VspParams = VspParams()):
    """VSP fuel rate [L/s] for a specific power ``P`` [W/kg]."""
    out = np.asarray(vsp_fuel_gps(P, vp)) / vp.rho
    return out if out.ndim else float(out)


def vsp_discontinuities(vp: VspParams = VspParams()) -> dict:
    """Jump of the VSP fuel map [g/s] at each breakpoint, right minus left."""
    mid_lo = (vp.alpha * vp.lower + vp.beta) * vp.lower + vp.gamma
    mid_hi = (vp.alpha * vp.upper + vp.beta) * vp.upper + vp.gamma
    return {
        "lower": {"P": vp.lower, "jump_g_per_s": mid_lo - vp.f},
        "upper": {"P": vp.upper, "jump_g_per_s": (vp.delta * vp.upper + vp.epsilon) - mid_hi},
    }


def arrb_rate(v, a, ap: ArrbParams = ArrbParams()):
    """ARRB fuel rate [L/s]; the squared-acceleration term uses a > 0 only."""
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    a_pos = np.maximum(a, 0.0)
    ml = ap.beta1 + ap.beta2 * v + ap.beta3 * v**2 + ap.beta4 * v**3 + ap.gamma1 * v * a + ap.gamma2 * v * a_pos**2
    out = 1e-3 * ml
    return out if out.ndim else float(out)


FUEL_MODELS = ("vt-micro", "vsp", "arrb")


def fuel_rate(model: str, v, a, theta=0.0, models: ModelSet = ModelSet()):
    """Dispatch to one of the fuel-rate models by name, returning L/s."""
    if model == "vt-micro":
        return vt_micro_rate(v, a, models.vt_micro)
    if model == "vsp":
        return vsp_rate(vsp_power(v, a, theta), models.vsp)
    if model == "arrb":
        return arrb_rate(v, a, models.arrb)
    raise ValueError(f"unknown fuel model {model!r}; choose from {FUEL_MODELS}")


def _spans(traj: Trajectory, intervals):
    if intervals is None:
        return [traj]
    return [traj.window(t0, t1) for t0, t1 in intervals]


def _distance(spans, vehicle_id) -> float:
    dist = sum(integrate(s.v, s.t) for s in spans if len(s) > 1)
    if not dist > 0:
        raise ZeroDistanceError(f"{vehicle_id}: zero distance travelled")
    return dist


def tractive_energy(traj: Trajectory, p: VehicleParams = VehicleParams(), intervals=None) -> float:
    """Tractive energy per distance [kWh/100 km].

    ``intervals`` restricts both integrals to a union of closed time spans.
    """
    spans = _spans(traj, intervals)
    dist = _distance(spans, traj.vehicle_id)
    work = sum(integrate(tractive_power(s.v, s.acceleration(), s.grade(), p), s.t) for s in spans if len(s) > 1)
    return work / (KWH_PER_100KM * dist)


def fuel_consumption(traj: Trajectory, rate_fn, models: ModelSet = ModelSet(), intervals=None) -> float:
    """Fuel use per distance [L/100 km].

    ``rate_fn`` is a model name from :data:`FUEL_MODELS` or a callable
    ``(v, a, theta) -> L/s``.
    """
    if isinstance(rate_fn, str):
        name = rate_fn

        def rate_fn(v, a, theta):
            return fuel_rate(name, v, a, theta, models)

    spans = _spans(traj, intervals)
    dist = _distance(spans, traj.vehicle_id)
    fuel = sum(integrate(rate_fn(s.v, s.acceleration(), s.grade()), s.t) for s in spans if len(s) > 1)
    return fuel / (L_PER_100KM * dist)


UNITS = {"tractive": "kWh/100km", "vt-micro": "L/100km", "vsp": "L/100km", "arrb": "L/100km"}
MODELS = ("tractive",) + FUEL_MODELS


@dataclass(frozen=True)
class EnergyRecord:
    vehicle_id: str
    position: int
    segment: str
    model: str
    value: float
    ratio_to_leader: float
    distance: float
    duration: float

    @property
    def unit(self) -> str:
        return UNITS[self.model]


@dataclass
class EnergyReport:
    records: list[EnergyRecord]
    meta: dict = field(default_factory=dict)

    def value(self, vehicle_id, model="tractive", segment="whole") -> float:
        for r in self.records:
            if (r.vehicle_id, r.model, r.segment) == (vehicle_id, model, segment):
                return r.value
        raise KeyError((vehicle_id, model, segment))

    def column(self, model="tractive", segment="whole") -> list[float]:
        """Values in platoon order for one model and segment class."""
        rows = sorted((r for r in self.records if r.model == model and r.segment == segment),
                      key=lambda r: r.position)
        return [r.value for r in rows]

    def ratios(self, model="tractive", segment="whole") -> list[float]:
        rows = sorted((r for r in self.records if r.model == model and r.segment == segment),
                      key=lambda r: r.position)
        return [r.ratio_to_leader for r in rows]

    def rows(self) -> list[dict]:
        return [dict(asdict(r), unit=r.unit) for r in self.records]


def _segment_intervals(labels):
    if labels is None:
        return {"whole": None}
    out = {"whole": None}
    for cls in ("steady", "perturbation"):
        spans = labels.spans(cls)
        if spans:
            out[cls] = spans
    return out


def assess_platoon(dataset: PlatoonDataset, models: ModelSet = ModelSet(), labels=None,
                   normalize: bool = True, per_vehicle: dict | None = None) -> EnergyReport:
    """Energy and fuel for every vehicle, model and segment class.

    With ``normalize`` (the default) every vehicle is assessed with the same
    ``models``; ``per_vehicle`` maps vehicle ids to their own
    :class:`VehicleParams` and is honoured only when ``normalize`` is off.
    ``labels`` is a :class:`~platoon_energy.analysis.SegmentLabel`; without
    it only the whole trip is assessed.
    """
    segments = _segment_intervals(labels)
    records = []
    leader_values = {}
    for pos, tr in enumerate(dataset.vehicles):
        vp = models.vehicle
        if not normalize and per_vehicle and tr.vehicle_id in per_vehicle:
            vp = per_vehicle[tr.vehicle_id]
        for seg, intervals in segments.items():
            spans = _spans(tr, intervals)
            dist = _distance(spans, tr.vehicle_id)
            duration = sum(s.duration for s in spans if len(s) > 1)
            for model in MODELS:
                if model == "tractive":
                    value = tractive_energy(tr, vp, intervals)
                else:
                    value = fuel_consumption(tr, model, models, intervals)
                if pos == 0:
                    leader_values[(seg, model)] = value
                base = leader_values[(seg, model)]
                ratio = value / base if base > 0 else float("nan")
                records.append(EnergyRecord(tr.vehicle_id, pos, seg, model, value, ratio, dist, duration))
    meta = {
        "normalized": normalize,
        "coefficients": models.to_dict(),
        "vsp_discontinuities": vsp_discontinuities(models.vsp),
    }
    if labels is not None:
        meta["segments"] = labels.to_dict()
    return EnergyReport(records, meta)
