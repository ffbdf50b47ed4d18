"""CSV ingestion and the canonical platoon file."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .trajectory import DataError, DrivingMode, PlatoonDataset, Trajectory

ROLES = ("time", "speed", "accel", "position", "altitude", "grade", "ivs")

UNIT_FACTORS = {
    "time": {"s": 1.0, "ms": 1e-3},
    "speed": {"m/s": 1.0, "km/h": 1 / 3.6},
    "accel": {"m/s2": 1.0, "m/s^2": 1.0},
    "position": {"m": 1.0, "km": 1e3},
    "altitude": {"m": 1.0, "km": 1e3},
    "ivs": {"m": 1.0, "km": 1e3},
    "grade": {"rad": 1.0},
}
DEFAULT_UNITS = {"time": "s", "speed": "m/s", "accel": "m/s2", "position": "m",
                 "altitude": "m", "ivs": "m", "grade": "rad"}
VEHICLE_ROLES = {"speed": "v", "accel": "a", "position": "s", "altitude": "h", "grade": "theta"}
COMMENT = "#"


@dataclass(frozen=True)
class ColumnSpec:
    column: str
    role: str
    vehicle: str | None = None
    unit: str | None = None
    # for ivs columns: the preceding vehicle of the pair
    leader: str | None = None

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"column {self.column!r}: unknown role {self.role!r}")
        unit = self.unit or DEFAULT_UNITS[self.role]
        if unit not in UNIT_FACTORS[self.role]:
            raise ValueError(f"column {self.column!r}: unit {unit!r} not valid for role {self.role!r}")
        object.__setattr__(self, "unit", unit)
        if self.role not in ("time", "ivs") and not self.vehicle:
            raise ValueError(f"column {self.column!r}: role {self.role!r} needs a vehicle id")
        if self.role == "ivs" and not (self.vehicle and self.leader):
            raise ValueError(f"column {self.column!r}: ivs needs 'leader' and 'vehicle' (follower)")

    @property
    def factor(self) -> float:
        return UNIT_FACTORS[self.role][self.unit]


@dataclass(frozen=True)
class ColumnMapping:
    """Maps CSV columns onto trajectory channels.

    ``vehicles`` fixes the platoon order (leader first); when empty the
    order in which speed columns are declared is used.
    """

    columns: tuple[ColumnSpec, ...]
    vehicles: tuple[str, ...] = ()
    mode_label: str = "Mixed"
    name: str = ""
    direction: str = ""

    @classmethod
    def from_dict(cls, data: dict) -> "ColumnMapping":
        cols = tuple(ColumnSpec(**c) for c in data["columns"])
        return cls(
            columns=cols,
            vehicles=tuple(data.get("vehicles", ())),
            mode_label=data.get("mode_label", "Mixed"),
            name=data.get("name", ""),
            direction=data.get("direction", ""),
        )

    @classmethod
    def load(cls, path) -> "ColumnMapping":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def vehicle_order(self) -> list[str]:
        if self.vehicles:
            return list(self.vehicles)
        order = []
        for c in self.columns:
            if c.role == "speed" and c.vehicle not in order:
                order.append(c.vehicle)
        return order


def _parse_cell(text, row, column):
    text = text.strip()
    if text == "" or text.lower() == "nan":
        return math.nan
    try:
        return float(text)
    except ValueError:
        raise DataError(
            f"row {row}, column {column!r}: cannot parse {text!r} as a number", row=row, column=column
        ) from None


def ingest_csv(path, schema: ColumnMapping) -> PlatoonDataset:
    """Read a platoon CSV into a dataset in SI units, without resampling.

    ``row`` in raised errors is the 1-based line number in the file.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with path.open(newline="") as fh:
        kept = [(n, ln) for n, ln in enumerate(fh, start=1) if not ln.startswith(COMMENT)]
    if not kept:
        raise DataError(f"{path}: empty file")
    linenos = [n for n, _ in kept]
    records = list(csv.reader(ln for _, ln in kept))
    header = [h.strip() for h in records[0]]

    time_cols = [c for c in schema.columns if c.role == "time"]
    if len(time_cols) != 1:
        raise ValueError("schema must declare exactly one time column")
    order = schema.vehicle_order()
    if not order:
        raise ValueError("schema declares no vehicles")
    for vid in order:
        if not any(c.role == "speed" and c.vehicle == vid for c in schema.columns):
            raise ValueError(f"schema declares no speed column for vehicle {vid!r}")
    for c in schema.columns:
        if c.column not in header:
            raise DataError(f"{path}: missing column {c.column!r}", column=c.column)

    index = {name: i for i, name in enumerate(header)}
    values = {c.column: [] for c in schema.columns}
    rows = []
    for row, record in zip(linenos[1:], records[1:]):
        if not record or all(not x.strip() for x in record):
            continue
        for c in schema.columns:
            i = index[c.column]
            if i >= len(record):
                raise DataError(f"row {row}: missing value for column {c.column!r}", row=row, column=c.column)
            values[c.column].append(_parse_cell(record[i], row, c.column))
        rows.append(row)
    if not values[time_cols[0].column]:
        raise DataError(f"{path}: no data rows")

    arrays = {c.column: np.asarray(values[c.column]) * c.factor for c in schema.columns}
    t = arrays[time_cols[0].column]
    if np.any(np.isnan(t)):
        row = rows[int(np.argmax(np.isnan(t)))]
        raise DataError(f"row {row}: missing time value", row=row, column=time_cols[0].column)
    steps = np.diff(t)
    if np.any(steps <= 0):
        k = int(np.argmax(steps <= 0)) + 1
        raise DataError(f"row {rows[k]}: time is not strictly increasing",
                        row=rows[k], column=time_cols[0].column)

    vehicles = []
    for vid in order:
        channels = {}
        for c in schema.columns:
            if c.vehicle == vid and c.role in VEHICLE_ROLES:
                channels[VEHICLE_ROLES[c.role]] = arrays[c.column]
        v = channels["v"]
        if np.any(np.isnan(v)):
            # interior gaps are filled linearly; that is part of ingestion
            ok = ~np.isnan(v)
            if ok.sum() < 2:
                raise DataError(f"vehicle {vid}: fewer than two speed values")
            v = np.interp(t, t[ok], v[ok])
            channels["v"] = v
        for name in ("a", "s", "h", "theta"):
            arr = channels.get(name)
            if arr is not None and np.any(np.isnan(arr)):
                ok = ~np.isnan(arr)
                channels[name] = np.interp(t, t[ok], arr[ok]) if ok.sum() >= 2 else None
        vehicles.append(Trajectory(vehicle_id=vid, t=t, **channels))

    ivs = {}
    for c in schema.columns:
        if c.role == "ivs":
            ivs[(c.leader, c.vehicle)] = arrays[c.column]
    return PlatoonDataset(
        vehicles=tuple(vehicles),
        ivs=ivs,
        mode_label=DrivingMode(schema.mode_label),
        name=schema.name,
        direction=schema.direction,
    )


def canonical_columns(dataset: PlatoonDataset) -> tuple[list[str], list[np.ndarray]]:
    names, cols = ["t"], [dataset.t]
    for tr in dataset.vehicles:
        vid = tr.vehicle_id
        for ch in ("v", "a", "s", "theta"):
            arr = getattr(tr, ch)
            if ch == "theta" and arr is None:
                arr = np.zeros_like(tr.v)
            if arr is None:
                raise DataError(f"{vid}: channel {ch!r} missing; prepare the dataset first")
            names.append(f"{vid}_{ch}")
            cols.append(arr)
    for lead, fol in dataset.pairs:
        if (lead, fol) in dataset.ivs:
            names.append(f"ivs_{lead}_{fol}")
            cols.append(dataset.ivs[(lead, fol)])
    return names, cols


def format_canonical(dataset: PlatoonDataset, config: dict | None = None) -> str:
    """Canonical CSV text; the first line is a JSON comment with the config."""
    if not dataset.is_synchronised():
        raise DataError("trajectories are not on a common time grid")
    meta = {
        "vehicles": dataset.ids,
        "mode_label": dataset.mode_label.value,
        "name": dataset.name,
        "direction": dataset.direction,
        "config": config or {},
    }
    names, cols = canonical_columns(dataset)
    buf = io.StringIO()
    buf.write(COMMENT + " " + json.dumps(meta, sort_keys=True) + "\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(names)
    data = np.column_stack(cols)
    for row in data:
        writer.writerow([repr(float(x)) for x in row])
    return buf.getvalue()


def write_canonical(dataset: PlatoonDataset, path, config: dict | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_canonical(dataset, config))
    return path


def read_header(path) -> dict:
    with Path(path).open() as fh:
        first = fh.readline()
    if not first.startswith(COMMENT):
        return {}
    return json.loads(first[1:])


def read_canonical(path) -> PlatoonDataset:
    """Load a canonical platoon CSV written by :func:`write_canonical`."""
    path = Path(path)
    meta = read_header(path)
    with path.open(newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith(COMMENT)]
    reader = csv.reader(lines)
    header = next(reader)
    rows = []
    for k, record in enumerate(reader):
        if not record:
            continue
        rows.append([_parse_cell(x, k + 3, header[j]) for j, x in enumerate(record)])
    data = np.asarray(rows, dtype=float)
    col = {name: data[:, j] for j, name in enumerate(header)}
    ids = meta.get("vehicles") or [n[:-2] for n in header if n.endswith("_v")]
    vehicles = []
    for vid in ids:
        if f"{vid}_v" not in col:
            raise DataError(f"{path}: missing column {vid}_v", column=f"{vid}_v")
        vehicles.append(Trajectory(
            vehicle_id=vid,
            t=col["t"],
            v=col[f"{vid}_v"],
            a=col.get(f"{vid}_a"),
            s=col.get(f"{vid}_s"),
            theta=col.get(f"{vid}_theta"),
        ))
    ivs = {}
    for lead, fol in zip(ids[:-1], ids[1:]):
        name = f"ivs_{lead}_{fol}"
        if name in col:
            ivs[(lead, fol)] = col[name]
    return PlatoonDataset(
        vehicles=tuple(vehicles),
        ivs=ivs,
        mode_label=DrivingMode(meta.get("mode_label", "Mixed")),
        name=meta.get("name", ""),
        direction=meta.get("direction", ""),
        meta=meta.get("config", {}),
    )
