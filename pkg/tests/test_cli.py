import csv
import json

import numpy as np
import pytest

from conftest import cruise, platoon_from
from platoon_energy.cli import main
from platoon_energy.io import read_canonical, read_header, write_canonical

SCHEMA = {
    "vehicles": ["C1", "C2"],
    "mode_label": "Human",
    "columns": [
        {"column": "time", "role": "time"},
        {"column": "speed_lead", "role": "speed", "vehicle": "C1", "unit": "km/h"},
        {"column": "speed_fol", "role": "speed", "vehicle": "C2", "unit": "km/h"},
        {"column": "gap", "role": "ivs", "leader": "C1", "vehicle": "C2"},
    ],
}


def read_rows(path):
    lines = [ln for ln in path.read_text().splitlines() if not ln.startswith("#")]
    return list(csv.DictReader(lines))


def load_json(path):
    return json.loads(path.read_text())


@pytest.fixture
def fixture_csv(tmp_path):
    t = 0.1 * np.arange(300)
    lead = 72.0 + 18.0 * np.sin(2 * np.pi * t / 30) ** 2
    lines = ["time,speed_lead,speed_fol,gap"]
    lines += [f"{a:.1f},{b:.4f},{b - 1:.4f},{30 + a:.3f}" for a, b in zip(t, lead)]
    data = tmp_path / "raw.csv"
    data.write_text("\n".join(lines) + "\n")
    schema = tmp_path / "schema.json"
    schema.write_text(json.dumps(SCHEMA))
    return data, schema


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    out = {}
    for preset in ("stable", "unstable", "levels-acc", "levels-human"):
        d = tmp_path_factory.mktemp(preset)
        assert main(["simulate", "--preset", preset, "--out", str(d)]) == 0
        out[preset] = d / "platoon.csv"
    return out


class TestIngest:
    def test_valid_fixture(self, tmp_path, fixture_csv):
        data, schema = fixture_csv
        assert main(["ingest", "--input", str(data), "--schema", str(schema), "--out", str(tmp_path)]) == 0
        ds = read_canonical(tmp_path / "platoon.csv")
        assert ds.ids == ["C1", "C2"]
        assert ds.mode_label.value == "Human"
        # 90 km/h by hand is 25 m/s
        assert ds["C1"].v.max() == pytest.approx(25.0, abs=1e-3)
        assert np.allclose(ds.ivs[("C1", "C2")], 30 + ds.t, atol=1e-9)
        assert read_header(tmp_path / "platoon.csv")["config"]["command"] == "ingest"

    def test_corrupted_fixture(self, tmp_path, fixture_csv, capsys):
        data, schema = fixture_csv
        lines = data.read_text().splitlines()
        lines[7] = lines[7].replace(",", ",x", 1)
        data.write_text("\n".join(lines) + "\n")
        code = main(["ingest", "--input", str(data), "--schema", str(schema), "--out", str(tmp_path)])
        assert code == 2
        assert "row 8" in capsys.readouterr().err

    def test_usage_error(self, capsys):
        assert main(["ingest", "--input", "x.csv"]) == 1
        assert main(["simulate", "--preset", "stable", "--scenario", "s.json"]) == 1
        assert main(["frobnicate"]) == 1


class TestSimulate:
    def test_byte_identical(self, tmp_path):
        for d in ("a", "b"):
            assert main(["simulate", "--preset", "human", "--out", str(tmp_path / d)]) == 0
        assert (tmp_path / "a/platoon.csv").read_bytes() == (tmp_path / "b/platoon.csv").read_bytes()

    def test_header_echoes_resolved_scenario(self, simulated):
        header = read_header(simulated["stable"])
        params = header["config"]["scenario"]["followers"][0]["params"]
        assert params == {"T": 1.2, "s0": 2.0, "kp": 1.6, "ki": 0.02, "kd": 0.6,
                          "a_min": -3.0, "a_max": 2.0, "v_set": 40.0}

    @pytest.mark.parametrize("preset, verdict", [("stable", "attenuating"), ("unstable", "amplifying")])
    def test_verdict_end_to_end(self, tmp_path, simulated, preset, verdict):
        assert main(["analyze", "--input", str(simulated[preset]), "--out", str(tmp_path)]) == 0
        assert load_json(tmp_path / "metrics.json")["stability"]["verdict"] == verdict

    def test_invalid_scenario(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"leader": {"base_speed": 20, "duration": 10},
                                    "followers": [{"type": "acc", "params": {"kp": "x"}}]}))
        assert main(["simulate", "--scenario", str(path), "--out", str(tmp_path)]) == 2
        assert "followers[0].params.kp" in capsys.readouterr().err

    def test_collision_exit(self, tmp_path):
        path = tmp_path / "crash.json"
        path.write_text(json.dumps({
            "leader": {"base_speed": 30, "duration": 60,
                       "events": [{"t_start": 10, "target_speed": 0, "accel": 8}]},
            "followers": [{"type": "acc", "count": 2, "params": {"kp": 0.05, "kd": 0, "a_min": -1}}],
        }))
        assert main(["simulate", "--scenario", str(path), "--out", str(tmp_path)]) == 3
        partial = tmp_path / "platoon_partial.csv"
        assert partial.exists()
        assert read_header(partial)["config"]["aborted"]["vehicle"] == "C2"
        assert main(["analyze", "--scenario", str(path), "--out", str(tmp_path / "x")]) == 3


class TestAssess:
    def test_identical_platoon_ratios(self, tmp_path):
        ds = platoon_from([cruise(20.0, 100.0, vehicle_id=f"C{k}") for k in (1, 2, 3)],
                          ivs={("C1", "C2"): np.full(1001, 30.0), ("C2", "C3"): np.full(1001, 30.0)})
        src = write_canonical(ds, tmp_path / "in.csv")
        assert main(["assess", "--input", str(src), "--out", str(tmp_path)]) == 0
        rows = read_rows(tmp_path / "energy_report.csv")
        assert rows and all(float(r["ratio_to_leader"]) == 1.0 for r in rows)

    def test_unstable_energy_non_decreasing(self, tmp_path, simulated):
        assert main(["assess", "--input", str(simulated["unstable"]), "--out", str(tmp_path)]) == 0
        rows = read_rows(tmp_path / "energy_report.csv")
        ec = [float(r["value"]) for r in rows if r["model"] == "tractive" and r["segment"] == "perturbation"]
        assert len(ec) == 5
        assert all(b >= a for a, b in zip(ec[1:], ec[2:]))

    def test_single_vehicle_closed_form(self, tmp_path):
        src = write_canonical(platoon_from([cruise(20.0, 100.0)]), tmp_path / "one.csv")
        assert main(["assess", "--input", str(src), "--out", str(tmp_path)]) == 0
        report = load_json(tmp_path / "energy_report.json")
        whole = {r["model"]: r["value"] for r in report["records"] if r["segment"] == "whole"}
        assert whole["tractive"] == pytest.approx(5.9945, rel=1e-6)
        assert whole["arrb"] == pytest.approx(9.23, rel=1e-6)
        assert report["config"]["coefficients"]["vehicle"]["m"] == 1500.0

    def test_coefficient_override(self, tmp_path):
        src = write_canonical(platoon_from([cruise(20.0, 100.0)]), tmp_path / "one.csv")
        coeffs = tmp_path / "c.json"
        coeffs.write_text(json.dumps({"vehicle": {"F0": 0.0, "F1": 0.0, "F2": 0.0}}))
        assert main(["assess", "--input", str(src), "--coeffs", str(coeffs), "--out", str(tmp_path)]) == 0
        whole = [r for r in load_json(tmp_path / "energy_report.json")["records"]
                 if r["segment"] == "whole" and r["model"] == "tractive"]
        assert whole[0]["value"] == 0.0


class TestAnalyze:
    def test_outputs_and_self_correlation(self, tmp_path, simulated):
        assert main(["analyze", "--input", str(simulated["levels-acc"]), "--out", str(tmp_path)]) == 0
        metrics = load_json(tmp_path / "metrics.json")
        row = metrics["correlation"]["rows"][0]
        assert row["C1-C1"] == pytest.approx(1.0)
        assert metrics["correlation"]["columns"] == [f"C1-C{k}" for k in range(1, 6)]
        for name in ("gap_hist_time_C1_C2.csv", "gap_hist_space_C4_C5.csv", "gap_scatter_C2_C3.csv",
                     "joint_C3.csv", "speed_std.csv"):
            assert (tmp_path / name).exists()
        hist = read_rows(tmp_path / "gap_hist_time_C1_C2.csv")
        assert sum(float(r["mass"]) for r in hist) == pytest.approx(1.0)

    def test_acc_mode_and_flat_slope(self, tmp_path, simulated):
        assert main(["analyze", "--input", str(simulated["levels-acc"]), "--out", str(tmp_path)]) == 0
        gaps = load_json(tmp_path / "metrics.json")["gaps"]
        for summary in gaps.values():
            assert abs(summary["time_gap"]["mode"] - 1.2) <= 0.15
            assert abs(summary["time_gap_speed_slope"]) < 0.005

    def test_human_positive_slope(self, tmp_path, simulated):
        assert main(["analyze", "--input", str(simulated["levels-human"]), "--out", str(tmp_path)]) == 0
        gaps = load_json(tmp_path / "metrics.json")["gaps"]
        assert all(s["time_gap_speed_slope"] > 0 for s in gaps.values())


def test_correlate(tmp_path, simulated):
    inputs = [str(simulated["levels-human"]), str(simulated["levels-acc"])]
    assert main(["correlate", *inputs, "--out", str(tmp_path)]) == 0
    table = load_json(tmp_path / "correlation.json")
    assert [r["label"] for r in table["rows"]] == ["Human", "ACC"]
    assert all(r["C1-C1"] == pytest.approx(1.0) for r in table["rows"])
    assert len(read_rows(tmp_path / "correlation.csv")) == 2
