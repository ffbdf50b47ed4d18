"""Scenario files for the simulator and the shipped presets."""

from __future__ import annotations

import json
import math
from dataclasses import MISSING, asdict, fields
from importlib import resources
from pathlib import Path

from .sim import AccControllerParams, HumanModelParams, LeaderCycle, Scenario, SpeedEvent

FOLLOWER_TYPES = {"acc": AccControllerParams, "human": HumanModelParams}
PRESETS = ("stable", "unstable", "human", "levels-acc", "levels-human")
TOP_KEYS = {"name", "dt", "dt_internal", "length", "seed", "noise_std", "leader", "followers", "description"}


class ScenarioError(ValueError):
    """Invalid scenario; ``path`` locates the offending field."""

    def __init__(self, path, message):
        super().__init__(f"{path}: {message}")
        self.path = path


def _number(value, path, *, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioError(path, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ScenarioError(path, "must be finite")
    if integer and int(value) != value:
        raise ScenarioError(path, "must be an integer")
    return int(value) if integer else float(value)


def _record(klass, data, path):
    if not isinstance(data, dict):
        raise ScenarioError(path, "expected an object")
    allowed = {f.name for f in fields(klass)}
    for key in data:
        if key not in allowed:
            raise ScenarioError(f"{path}.{key}", "unknown field")
    kw = {k: _number(v, f"{path}.{k}") for k, v in data.items()}
    for f in fields(klass):
        if f.name not in kw and f.default is MISSING:
            raise ScenarioError(f"{path}.{f.name}", "required")
    try:
        return klass(**kw)
    except ValueError as exc:
        raise ScenarioError(path, str(exc)) from None


def parse_scenario(data: dict) -> Scenario:
    if not isinstance(data, dict):
        raise ScenarioError("$", "expected an object")
    for key in data:
        if key not in TOP_KEYS:
            raise ScenarioError(key, "unknown field")
    leader = data.get("leader")
    if not isinstance(leader, dict):
        raise ScenarioError("leader", "required object")
    for key in leader:
        if key not in {"base_speed", "duration", "events", "grade"}:
            raise ScenarioError(f"leader.{key}", "unknown field")
    for key in ("base_speed", "duration"):
        if key not in leader:
            raise ScenarioError(f"leader.{key}", "required")
    events = []
    for k, ev in enumerate(leader.get("events", [])):
        events.append(_record(SpeedEvent, ev, f"leader.events[{k}]"))
    grade = []
    for k, pt in enumerate(leader.get("grade", [])):
        if not isinstance(pt, (list, tuple)) or len(pt) != 2:
            raise ScenarioError(f"leader.grade[{k}]", "expected [position, theta]")
        grade.append((_number(pt[0], f"leader.grade[{k}][0]"), _number(pt[1], f"leader.grade[{k}][1]")))
    try:
        cycle = LeaderCycle(
            base_speed=_number(leader["base_speed"], "leader.base_speed"),
            duration=_number(leader["duration"], "leader.duration"),
            events=tuple(events),
            grade=tuple(grade),
        )
        cycle.knots()
    except ValueError as exc:
        raise ScenarioError("leader", str(exc)) from None

    raw = data.get("followers")
    if not isinstance(raw, list) or not raw:
        raise ScenarioError("followers", "need a non-empty list")
    followers = []
    for k, fol in enumerate(raw):
        path = f"followers[{k}]"
        if not isinstance(fol, dict):
            raise ScenarioError(path, "expected an object")
        for key in fol:
            if key not in {"type", "params", "count"}:
                raise ScenarioError(f"{path}.{key}", "unknown field")
        kind = fol.get("type")
        if kind not in FOLLOWER_TYPES:
            raise ScenarioError(f"{path}.type", f"must be one of {sorted(FOLLOWER_TYPES)}")
        params = _record(FOLLOWER_TYPES[kind], fol.get("params", {}), f"{path}.params")
        count = _number(fol.get("count", 1), f"{path}.count", integer=True)
        if count < 1:
            raise ScenarioError(f"{path}.count", "must be >= 1")
        followers.extend([params] * count)

    kw = {}
    for key in ("dt", "dt_internal", "length", "noise_std"):
        if key in data:
            kw[key] = _number(data[key], key)
    for key in ("dt", "dt_internal", "length"):
        if key in kw and not kw[key] > 0:
            raise ScenarioError(key, "must be positive")
    if kw.get("noise_std", 0.0) < 0:
        raise ScenarioError("noise_std", "must be non-negative")
    seed = data.get("seed")
    if seed is not None:
        seed = _number(seed, "seed", integer=True)
    sc = Scenario(cycle=cycle, followers=tuple(followers), seed=seed, name=str(data.get("name", "")), **kw)
    if sc.dt_internal > sc.dt:
        raise ScenarioError("dt_internal", "must not exceed dt")
    return sc


def load_scenario(path) -> Scenario:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ScenarioError("$", f"invalid JSON: {exc}") from None
    return parse_scenario(data)


def load_preset(name: str) -> Scenario:
    if name not in PRESETS:
        raise ScenarioError("preset", f"unknown preset {name!r}; choose from {PRESETS}")
    text = resources.files("platoon_energy").joinpath(f"data/scenarios/{name}.json").read_text()
    return parse_scenario(json.loads(text))


def scenario_to_dict(sc: Scenario) -> dict:
    """Fully resolved scenario, defaults included, in the file layout."""
    followers = []
    for p in sc.followers:
        kind = "acc" if isinstance(p, AccControllerParams) else "human"
        followers.append({"type": kind, "params": asdict(p)})
    return {
        "name": sc.name,
        "dt": sc.dt,
        "dt_internal": sc.dt_internal,
        "length": sc.length,
        "seed": sc.seed,
        "noise_std": sc.noise_std,
        "leader": {
            "base_speed": sc.cycle.base_speed,
            "duration": sc.cycle.duration,
            "events": [asdict(e) for e in sc.cycle.events],
            "grade": [list(g) for g in sc.cycle.grade],
        },
        "followers": followers,
    }
