"""Command-line entry point: ``platoon-energy <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 simulation aborted by
a collision.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import analysis
from .energy import ModelSet, VehicleParams, assess_platoon
from .io import COMMENT, ColumnMapping, format_canonical, ingest_csv, read_canonical
from .scenario import PRESETS, ScenarioError, load_preset, load_scenario, scenario_to_dict
from .sim import Collision, run_scenario
from .trajectory import DEFAULT_DT, DataError, prepare

log = logging.getLogger("platoon_energy")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_COLLISION = 0, 1, 2, 3


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    input: str | None = None
    schema: str | None = None
    scenario: str | None = None
    preset: str | None = None
    out: str = "out"
    dt: float | None = None
    coeffs: str | None = None
    models: ModelSet = field(default_factory=ModelSet)
    segments: tuple[float, float, float] = (0.3, 5.0, 2.0)
    timegap_ref: str = "follower"
    normalize: bool = True
    time_bin: float = 0.1
    space_bin: float = 1.0
    v_bin: float = 1.0
    a_bin: float = 0.1
    transient: float = 0.0
    inputs: list = field(default_factory=list)

    def sources(self) -> list[str]:
        return [k for k in ("input", "scenario", "preset") if getattr(self, k)]

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in ("command", "input", "schema", "scenario", "preset", "dt",
                                             "coeffs", "timegap_ref", "normalize", "time_bin", "space_bin",
                                             "v_bin", "a_bin", "transient", "inputs")}
        out["segments"] = {"a_threshold": self.segments[0], "min_duration": self.segments[1], "pad": self.segments[2]}
        out["coefficients"] = self.models.to_dict()
        return out


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _segments(text):
    try:
        parts = [float(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError("expected a_thr,min_dur,pad") from None
    if len(parts) != 3:
        raise argparse.ArgumentTypeError("expected a_thr,min_dur,pad")
    return tuple(parts)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--dt", type=float, help="output grid step [s] (default 0.1)")
    common.add_argument("--config", help="JSON file with run settings; flags override it")
    common.add_argument("--out", help="output directory (default ./out)")
    common.add_argument("--coeffs", help="JSON coefficient overrides (vehicle, vt_micro, vsp, arrb)")
    common.add_argument("--segments", type=_segments, help="segmentation a_thr,min_dur,pad")
    common.add_argument("--timegap-ref", choices=("follower", "preceding"), dest="timegap_ref")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="platoon-energy", description="Platoon energy and behaviour toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", parents=[common], help="raw CSV -> canonical platoon CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--schema", required=True, help="JSON column mapping")

    p = sub.add_parser("simulate", parents=[common], help="scenario -> canonical platoon CSV")
    g = p.add_mutually_exclusive_group()
    g.add_argument("--scenario")
    g.add_argument("--preset", choices=PRESETS)

    for name, text in (("assess", "energy and fuel per vehicle"), ("analyze", "gaps, stability, joint maps")):
        p = sub.add_parser(name, parents=[common], help=text)
        g = p.add_mutually_exclusive_group()
        g.add_argument("--input", help="canonical platoon CSV")
        g.add_argument("--scenario")
        g.add_argument("--preset", choices=PRESETS)
        if name == "assess":
            p.add_argument("--no-normalize", dest="normalize", action="store_false", default=None,
                           help="use per-vehicle parameters from the config's 'per_vehicle' section")
        else:
            p.add_argument("--transient", type=float, help="drop samples before this time in gap statistics")

    p = sub.add_parser("correlate", parents=[common], help="leader-follower map correlation table")
    p.add_argument("inputs", nargs="+", help="canonical platoon CSVs, one per table row")
    return parser


def resolve_config(args) -> tuple[RunConfig, dict]:
    cfg = RunConfig(command=args.command)
    extra = {}
    if getattr(args, "config", None):
        data = json.loads(Path(args.config).read_text())
        extra = data
        for key, value in data.items():
            if key == "segments":
                if isinstance(value, dict):
                    value = (value["a_threshold"], value["min_duration"], value["pad"])
                cfg.segments = tuple(float(x) for x in value)
            elif key in ("per_vehicle", "coefficients"):
                continue
            elif hasattr(cfg, key) and key not in ("command", "models"):
                setattr(cfg, key, value)
            else:
                raise UsageError(f"config: unknown key {key!r}")
        if "coefficients" in data:
            cfg.models = ModelSet.from_dict(data["coefficients"])
    for key in ("input", "schema", "scenario", "preset", "out", "dt", "coeffs", "segments", "timegap_ref",
                "normalize", "transient", "inputs"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, value if key != "segments" else tuple(value))
    if cfg.coeffs:
        cfg.models = ModelSet.from_dict(json.loads(Path(cfg.coeffs).read_text()))
    if cfg.command == "simulate" and len([s for s in cfg.sources() if s != "input"]) != 1:
        raise UsageError("simulate needs exactly one of --scenario or --preset")
    if cfg.command in ("assess", "analyze") and len(cfg.sources()) != 1:
        raise UsageError(f"{cfg.command} needs exactly one of --input, --scenario or --preset")
    if cfg.dt is not None and not cfg.dt > 0:
        raise UsageError("--dt must be positive")
    return cfg, extra


def _with_header(body: str, config: dict) -> str:
    return COMMENT + " " + json.dumps(config, sort_keys=True) + "\n" + body


def _write_csv(path: Path, header, rows, config: dict):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(_with_header(buf.getvalue(), config))


def _write_json(path: Path, payload: dict, config: dict):
    payload = dict(payload, config=config)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(x):
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    raise TypeError(type(x))


def _scenario(cfg: RunConfig):
    sc = load_scenario(cfg.scenario) if cfg.scenario else load_preset(cfg.preset)
    return replace(sc, dt=cfg.dt) if cfg.dt is not None else sc


def _load_dataset(cfg: RunConfig, echo: dict):
    if cfg.input:
        ds = read_canonical(cfg.input)
        echo["source"] = {"input": cfg.input, "header": ds.meta}
        return ds
    sc = _scenario(cfg)
    echo["scenario"] = scenario_to_dict(sc)
    return run_scenario(sc)


def cmd_ingest(cfg: RunConfig) -> list[Path]:
    schema = ColumnMapping.load(cfg.schema)
    raw = ingest_csv(cfg.input, schema)
    ds = prepare(raw, cfg.dt or DEFAULT_DT, length=cfg.models.vehicle.L)
    echo = cfg.to_dict()
    out = Path(cfg.out) / "platoon.csv"
    out.write_text(format_canonical(ds, echo))
    return [out]


def cmd_simulate(cfg: RunConfig) -> list[Path]:
    sc = _scenario(cfg)
    echo = cfg.to_dict()
    echo["scenario"] = scenario_to_dict(sc)
    out = Path(cfg.out) / "platoon.csv"
    try:
        ds = run_scenario(sc)
    except Collision as exc:
        if exc.partial is not None:
            echo["aborted"] = {"time": exc.time, "vehicle": exc.vehicle_id}
            (Path(cfg.out) / "platoon_partial.csv").write_text(format_canonical(exc.partial, echo))
        raise
    out.write_text(format_canonical(ds, echo))
    return [out]


def _labels(cfg: RunConfig, ds):
    a_thr, min_dur, pad = cfg.segments
    return analysis.segment_steady_perturbation(ds.vehicles[0], a_thr, min_dur, pad)


def cmd_assess(cfg: RunConfig, extra: dict | None = None) -> list[Path]:
    echo = cfg.to_dict()
    ds = _load_dataset(cfg, echo)
    labels = _labels(cfg, ds)
    per_vehicle = None
    if extra and "per_vehicle" in extra:
        per_vehicle = {vid: VehicleParams(**p) for vid, p in extra["per_vehicle"].items()}
    report = assess_platoon(ds, cfg.models, labels, cfg.normalize, per_vehicle)
    out_dir = Path(cfg.out)
    rows = report.rows()
    header = ["vehicle_id", "position", "segment", "model", "value", "unit", "ratio_to_leader", "distance", "duration"]
    csv_path = out_dir / "energy_report.csv"
    _write_csv(csv_path, header, [[r[h] for h in header] for r in rows], echo)
    json_path = out_dir / "energy_report.json"
    _write_json(json_path, {"records": rows, "meta": report.meta}, echo)
    return [csv_path, json_path]


def cmd_analyze(cfg: RunConfig) -> list[Path]:
    echo = cfg.to_dict()
    ds = _load_dataset(cfg, echo)
    out_dir = Path(cfg.out)
    written = []
    t_min = cfg.transient or None
    gaps = analysis.compute_gaps(ds, cfg.timegap_ref)
    gap_summary = {}
    for g in gaps:
        tag = f"{g.leader}_{g.follower}"
        th, sh = analysis.gap_histograms(g, cfg.time_bin, cfg.space_bin, t_min)
        for kind, h in (("time", th), ("space", sh)):
            path = out_dir / f"gap_hist_{kind}_{tag}.csv"
            _write_csv(path, ["bin_left", "bin_right", "mass"], h.rows(), echo)
            written.append(path)
        keep = g.defined if t_min is None else g.defined & (g.t >= t_min)
        path = out_dir / f"gap_scatter_{tag}.csv"
        _write_csv(path, ["t", "speed", "space_gap", "time_gap"],
                   zip(g.t[keep], g.reference_speed[keep], g.space_gap[keep], g.time_gap[keep]), echo)
        written.append(path)
        gap_summary[tag] = {
            "time_gap": {"mean": th.mean, "median": th.median, "std": th.std, "mode": th.mode},
            "space_gap": {"mean": sh.mean, "median": sh.median, "std": sh.std, "mode": sh.mode},
            "time_gap_speed_slope": analysis.gap_speed_slope(g, t_min),
        }

    v_edges, a_edges = analysis.joint_edges(ds.vehicles, cfg.v_bin, cfg.a_bin)
    maps = {}
    for tr in ds.vehicles:
        jd = analysis.joint_distribution(tr, v_edges, a_edges)
        maps[tr.vehicle_id] = jd
        path = out_dir / f"joint_{tr.vehicle_id}.csv"
        _write_csv(path, ["v_bin", "a_bin", "mass"], jd.rows(), echo)
        written.append(path)
    lead = ds.ids[0]
    correlation = {f"{lead}-{vid}": analysis.map_correlation(maps[lead], maps[vid]) for vid in ds.ids}

    labels = _labels(cfg, ds)
    present = [c for c in analysis.CLASSES if labels.spans(c)]
    stds = analysis.std_energy_pairs(ds, labels, cfg.models, present)
    path = out_dir / "speed_std.csv"
    _write_csv(path, ["vehicle_id", "segment", "speed_std", "tractive_energy"],
               [[r["vehicle_id"], r["segment"], r["speed_std"], r["tractive_energy"]] for r in stds], echo)
    written.append(path)
    stability = None
    if labels.spans(analysis.PERTURBATION):
        stability = analysis.l2_amplification(ds, labels).to_dict()

    metrics = {
        "vehicles": ds.ids,
        "mode_label": ds.mode_label.value,
        "segments": labels.to_dict(),
        "gaps": gap_summary,
        "stability": stability,
        "correlation": {"columns": list(correlation), "rows": [{"label": ds.mode_label.value, **correlation}]},
    }
    path = out_dir / "metrics.json"
    _write_json(path, metrics, echo)
    written.append(path)
    return written


def cmd_correlate(cfg: RunConfig) -> list[Path]:
    echo = cfg.to_dict()
    rows, columns = [], []
    for src in cfg.inputs:
        ds = read_canonical(src)
        row = analysis.correlation_row(ds, cfg.v_bin, cfg.a_bin)
        label = ds.mode_label.value if ds.mode_label.value != "Mixed" else Path(src).stem
        rows.append({"label": label, "source": src, **row})
        columns.extend(c for c in row if c not in columns)
    out_dir = Path(cfg.out)
    json_path = out_dir / "correlation.json"
    _write_json(json_path, {"columns": columns, "rows": rows}, echo)
    csv_path = out_dir / "correlation.csv"
    _write_csv(csv_path, ["label"] + columns, [[r["label"]] + [r.get(c, "") for c in columns] for r in rows], echo)
    return [json_path, csv_path]


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg, extra = resolve_config(args)
    except UsageError as exc:
        print(f"platoon-energy: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    except (OSError, ValueError) as exc:
        print(f"platoon-energy: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    handlers = {"ingest": cmd_ingest, "simulate": cmd_simulate, "analyze": cmd_analyze, "correlate": cmd_correlate}
    try:
        if cfg.command == "assess":
            written = cmd_assess(cfg, extra)
        else:
            written = handlers[cfg.command](cfg)
    except Collision as exc:
        print(f"platoon-energy: simulation aborted: {exc}", file=sys.stderr)
        return EXIT_COLLISION
    except (DataError, ScenarioError, FileNotFoundError) as exc:
        print(f"platoon-energy: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"platoon-energy: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    for path in written:
        log.info("wrote %s", path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
