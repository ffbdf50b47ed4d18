import json

import pytest

from platoon_energy.scenario import PRESETS, ScenarioError, load_preset, load_scenario, parse_scenario, scenario_to_dict
from platoon_energy.sim import AccControllerParams, HumanModelParams


def minimal(**extra):
    data = {"leader": {"base_speed": 20.0, "duration": 60.0}, "followers": [{"type": "acc"}]}
    data.update(extra)
    return data


@pytest.mark.parametrize("name", PRESETS)
def test_presets_load(name):
    sc = load_preset(name)
    assert sc.name == name
    assert len(sc.followers) == 4


def test_defaults_filled():
    sc = parse_scenario(minimal())
    assert sc.followers == (AccControllerParams(),)
    assert sc.dt == 0.1 and sc.dt_internal == 0.05


def test_count_expands():
    sc = parse_scenario(minimal(followers=[{"type": "human", "count": 3, "params": {"v0": 30}}]))
    assert sc.followers == (HumanModelParams(v0=30.0),) * 3


def test_round_trip():
    sc = load_preset("levels-human")
    assert parse_scenario(scenario_to_dict(sc)) == sc


@pytest.mark.parametrize("data, path", [
    (minimal(leader={"duration": 60.0}), "leader.base_speed"),
    (minimal(followers=[]), "followers"),
    (minimal(followers=[{"type": "truck"}]), "followers[0].type"),
    (minimal(followers=[{"type": "acc", "params": {"kp": "high"}}]), "followers[0].params.kp"),
    (minimal(followers=[{"type": "acc", "params": {"gain": 1}}]), "followers[0].params.gain"),
    (minimal(followers=[{"type": "acc", "params": {"a_min": 1.0}}]), "followers[0].params"),
    (minimal(followers=[{"type": "acc", "count": 0}]), "followers[0].count"),
    (minimal(dt=-0.1), "dt"),
    (minimal(dt=0.1, dt_internal=0.2), "dt_internal"),
    (minimal(extra=1), "extra"),
    (minimal(leader={"base_speed": 20.0, "duration": 60.0, "events": [{"t_start": 1.0, "target_speed": 10.0}]}),
     "leader.events[0].accel"),
    (minimal(leader={"base_speed": 20.0, "duration": 60.0, "grade": [[0.0]]}), "leader.grade[0]"),
])
def test_errors_name_the_field(data, path):
    with pytest.raises(ScenarioError) as err:
        parse_scenario(data)
    assert err.value.path == path


def test_infeasible_leader_reported():
    events = [{"t_start": 10.0, "target_speed": 0.0, "accel": 0.1}, {"t_start": 20.0, "target_speed": 20.0, "accel": 1}]
    with pytest.raises(ScenarioError, match="event 0"):
        parse_scenario(minimal(leader={"base_speed": 20.0, "duration": 60.0, "events": events}))


def test_load_file(tmp_path):
    path = tmp_path / "s.json"
    path.write_text(json.dumps(minimal(seed=4)))
    assert load_scenario(path).seed == 4
    path.write_text("{not json")
    with pytest.raises(ScenarioError):
        load_scenario(path)


def test_unknown_preset():
    with pytest.raises(ScenarioError):
        load_preset("nope")
