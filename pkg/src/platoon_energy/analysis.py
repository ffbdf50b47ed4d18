"""Platoon behaviour diagnostics.

Gap series and their distributions, steady/perturbation segmentation of the
leader's drive, speed variability per segment class, L2 amplification of
speed deviations along the chain, and speed-acceleration joint maps with
leader-follower Pearson correlation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .energy import ModelSet, tractive_energy
from .trajectory import PlatoonDataset, Trajectory

V_MIN = 1.0
STEADY = "steady"
PERTURBATION = "perturbation"
CLASSES = (STEADY, PERTURBATION)


class EmptySegmentError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class GapSeries:
    """Spacing of ``follower`` behind ``leader``; undefined time gaps are NaN."""

    leader: str
    follower: str
    t: np.ndarray
    space_gap: np.ndarray
    time_gap: np.ndarray
    reference_speed: np.ndarray

    @property
    def defined(self) -> np.ndarray:
        return ~np.isnan(self.time_gap)


def compute_gaps(dataset: PlatoonDataset, reference: str = "follower", v_min: float = V_MIN) -> list[GapSeries]:
    """Space and time gaps for each consecutive pair.

    ``reference`` picks whose speed divides the spacing: the ``"follower"``
    (the usual headway convention) or the ``"preceding"`` vehicle. Samples
    where that speed is below ``v_min`` get an undefined (NaN) time gap.
    """
    if reference not in ("follower", "preceding"):
        raise ValueError("reference must be 'follower' or 'preceding'")
    out = []
    for lead, fol in dataset.pairs:
        if (lead, fol) not in dataset.ivs:
            raise ValueError(f"no spacing for pair {lead}-{fol}")
        ivs = dataset.ivs[(lead, fol)]
        v_ref = dataset[fol if reference == "follower" else lead].v
        tg = np.full_like(ivs, np.nan)
        ok = v_ref >= v_min
        tg[ok] = ivs[ok] / v_ref[ok]
        out.append(GapSeries(lead, fol, dataset.t, ivs, tg, v_ref))
    return out


@dataclass(frozen=True, eq=False)
class Histogram:
    edges: np.ndarray
    mass: np.ndarray
    count: int
    mean: float
    median: float
    std: float

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def mode(self) -> float:
        return float(self.centers[int(np.argmax(self.mass))])

    def rows(self):
        return [(float(l), float(r), float(m)) for l, r, m in zip(self.edges[:-1], self.edges[1:], self.mass)]


def aligned_edges(values, width: float) -> np.ndarray:
    """Bin edges at integer multiples of ``width`` covering ``values``."""
    if not width > 0:
        raise ValueError("bin width must be positive")
    lo = math.floor(np.min(values) / width + 1e-9)
    hi = math.ceil(np.max(values) / width - 1e-9)
    if hi <= lo:
        hi = lo + 1
    return np.arange(lo, hi + 1) * width


def histogram(values, width: float) -> Histogram:
    values = np.asarray(values, dtype=float)
    values = values[~np.isnan(values)]
    if values.size == 0:
        raise ValueError("no defined samples to histogram")
    edges = aligned_edges(values, width)
    counts, _ = np.histogram(values, edges)
    return Histogram(edges, counts / values.size, int(values.size), float(values.mean()),
                     float(np.median(values)), float(values.std()))


def gap_histograms(gaps, time_bin: float = 0.1, space_bin: float = 1.0, t_min: float | None = None):
    """Normalised (time gap, space gap) histograms.

    ``gaps`` is one :class:`GapSeries` or several, which are pooled.
    ``t_min`` drops samples before that time (initial transients).
    """
    if isinstance(gaps, GapSeries):
        gaps = [gaps]
    tg, sg = [], []
    for g in gaps:
        keep = g.defined if t_min is None else g.defined & (g.t >= t_min)
        tg.append(g.time_gap[keep])
        sg.append(g.space_gap[keep])
    tg = np.concatenate(tg) if tg else np.array([])
    sg = np.concatenate(sg) if sg else np.array([])
    if tg.size == 0:
        raise ValueError("all gap samples are undefined")
    return histogram(tg, time_bin), histogram(sg, space_bin)


def gap_speed_slope(gap: GapSeries, t_min: float | None = None) -> float:
    """Least-squares slope of time gap against reference speed [s per m/s]."""
    keep = gap.defined if t_min is None else gap.defined & (gap.t >= t_min)
    x, y = gap.reference_speed[keep], gap.time_gap[keep]
    if x.size < 2 or np.ptp(x) == 0:
        raise ValueError("need at least two distinct speeds for a slope")
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


@dataclass(frozen=True)
class SegmentLabel:
    """Partition of ``[t_start, t_end]`` into steady and perturbation spans.

    Adjacent intervals share their boundary time.
    """

    intervals: tuple[tuple[float, float, str], ...]

    def __post_init__(self):
        ivs = tuple((float(a), float(b), c) for a, b, c in self.intervals)
        if not ivs:
            raise ValueError("empty segmentation")
        for (a, b, c), nxt in zip(ivs, ivs[1:] + (None,)):
            if c not in CLASSES:
                raise ValueError(f"unknown segment class {c!r}")
            if b < a:
                raise ValueError("interval end before start")
            if nxt is not None and nxt[0] != b:
                raise ValueError("intervals must be contiguous")
        object.__setattr__(self, "intervals", ivs)

    @property
    def t_start(self) -> float:
        return self.intervals[0][0]

    @property
    def t_end(self) -> float:
        return self.intervals[-1][1]

    def spans(self, cls: str) -> list[tuple[float, float]]:
        return [(a, b) for a, b, c in self.intervals if c == cls]

    def duration(self, cls: str) -> float:
        return sum(b - a for a, b in self.spans(cls))

    def mask(self, t, cls: str) -> np.ndarray:
        """Samples belonging to ``cls``; each sample belongs to one class.

        Intervals are half-open ``[a, b)`` except the last, which is closed.
        """
        t = np.asarray(t)
        out = np.zeros(t.shape, dtype=bool)
        last = len(self.intervals) - 1
        for k, (a, b, c) in enumerate(self.intervals):
            if c != cls:
                continue
            out |= (t >= a) & ((t < b) if k < last else (t <= b))
        return out

    def to_dict(self) -> dict:
        return {"intervals": [list(iv) for iv in self.intervals]}


def _merge_short(intervals, min_duration):
    """Absorb intervals shorter than ``min_duration`` into a neighbour."""
    ivs = [list(iv) for iv in intervals]
    while len(ivs) > 1:
        short = [k for k, (a, b, _) in enumerate(ivs) if b - a < min_duration - 1e-9]
        if not short:
            break
        k = min(short, key=lambda j: ivs[j][1] - ivs[j][0])
        if k == 0:
            nb = 1
        elif k == len(ivs) - 1:
            nb = k - 1
        else:
            left, right = ivs[k - 1], ivs[k + 1]
            nb = k - 1 if left[1] - left[0] >= right[1] - right[0] else k + 1
        a = min(ivs[k][0], ivs[nb][0])
        b = max(ivs[k][1], ivs[nb][1])
        ivs[min(k, nb)] = [a, b, ivs[nb][2]]
        del ivs[max(k, nb)]
        # neighbours of the same class fuse
        fused = [ivs[0]]
        for iv in ivs[1:]:
            if iv[2] == fused[-1][2]:
                fused[-1][1] = iv[1]
            else:
                fused.append(iv)
        ivs = fused
    return [tuple(iv) for iv in ivs]


def segment_steady_perturbation(leader: Trajectory, a_threshold: float = 0.3, min_duration: float = 5.0,
                                pad: float = 2.0) -> SegmentLabel:
    """Split the leader's drive into steady cruising and perturbation events.

    Runs where ``|a| > a_threshold`` are widened by ``pad`` on both sides and
    merged when separated by less than ``min_duration``. Boundaries snap to
    sample times, so class integrals add up to the whole-trip integral.
    """
    t = leader.t
    a = leader.acceleration()
    t0, t1 = float(t[0]), float(t[-1])

    def snap(x):
        return float(t[int(np.argmin(np.abs(t - x)))])

    hot = np.abs(a) > a_threshold
    runs = []
    if hot.any():
        edges = np.diff(np.concatenate(([0], hot.astype(int), [0])))
        starts = np.flatnonzero(edges == 1)
        ends = np.flatnonzero(edges == -1) - 1
        for i0, i1 in zip(starts, ends):
            runs.append([snap(max(t0, t[i0] - pad)), snap(min(t1, t[i1] + pad))])
    merged = []
    for r in runs:
        if merged and r[0] - merged[-1][1] < min_duration:
            merged[-1][1] = max(merged[-1][1], r[1])
        else:
            merged.append(r)
    intervals = []
    cursor = t0
    for a0, a1 in merged:
        if a0 > cursor:
            intervals.append((cursor, a0, STEADY))
        intervals.append((max(a0, cursor), a1, PERTURBATION))
        cursor = a1
    if cursor < t1 or not intervals:
        intervals.append((cursor, t1, STEADY))
    intervals = [iv for iv in intervals if iv[1] > iv[0]] or [(t0, t1, STEADY)]
    return SegmentLabel(tuple(_merge_short(intervals, min_duration)))


def speed_std_per_segment(dataset: PlatoonDataset, labels: SegmentLabel, classes=CLASSES) -> dict:
    """Population standard deviation of speed per vehicle and class."""
    out = {}
    for tr in dataset.vehicles:
        out[tr.vehicle_id] = {}
        for cls in classes:
            m = labels.mask(tr.t, cls)
            if not m.any():
                raise EmptySegmentError(f"no {cls} samples")
            out[tr.vehicle_id][cls] = float(np.std(tr.v[m]))
    return out


def std_energy_pairs(dataset: PlatoonDataset, labels: SegmentLabel, models: ModelSet = ModelSet(),
                     classes=CLASSES) -> list[dict]:
    """Speed standard deviation next to tractive energy, per vehicle and class."""
    stds = speed_std_per_segment(dataset, labels, classes)
    rows = []
    for tr in dataset.vehicles:
        for cls in classes:
            rows.append({
                "vehicle_id": tr.vehicle_id,
                "segment": cls,
                "speed_std": stds[tr.vehicle_id][cls],
                "tractive_energy": tractive_energy(tr, models.vehicle, labels.spans(cls)),
            })
    return rows


@dataclass
class StabilityMetrics:
    """L2 amplification per perturbation interval.

    ``l2_ratio[k][vid]`` and ``overshoot_peak[k][vid]`` are indexed by
    perturbation interval then follower id; ratios are None where the
    leader's deviation vanishes.
    """

    intervals: list[tuple[float, float]]
    l2_ratio: list[dict]
    overshoot_peak: list[dict]
    followers: list[str]
    verdict: str
    amplifying_intervals: int = 0
    meta: dict = field(default_factory=dict)

    def ratios(self, k: int = 0) -> list[float | None]:
        return [self.l2_ratio[k][f] for f in self.followers]

    def to_dict(self) -> dict:
        return {
            "intervals": [list(iv) for iv in self.intervals],
            "followers": self.followers,
            "l2_ratio": self.l2_ratio,
            "overshoot_peak": self.overshoot_peak,
            "verdict": self.verdict,
            "amplifying_intervals": self.amplifying_intervals,
        }


def l2_norm(x, dt: float = 1.0) -> float:
    return float(np.sqrt(np.sum(np.square(x)) * dt))


def l2_amplification(dataset: PlatoonDataset, labels: SegmentLabel, followers=None,
                     tol: float = 1e-6) -> StabilityMetrics:
    """Follower-to-leader L2 ratio of speed deviations in each perturbation.

    Deviations are taken from each vehicle's own mean speed over the
    interval. The platoon is ``"amplifying"`` when the ratio strictly grows
    along the followers in a majority of intervals, ``"attenuating"`` when
    every ratio stays at or below one in a majority, else ``"mixed"``.
    """
    spans = labels.spans(PERTURBATION)
    if not spans:
        raise EmptySegmentError("no perturbation intervals")
    lead = dataset.vehicles[0]
    followers = list(followers) if followers is not None else dataset.ids[1:]
    ratios, peaks = [], []
    n_amp = n_att = 0
    for a, b in spans:
        m = (lead.t >= a) & (lead.t <= b)
        d_lead = lead.v[m] - lead.v[m].mean()
        norm_lead = l2_norm(d_lead)
        r_k, p_k = {}, {}
        for fid in followers:
            v = dataset[fid].v[m]
            r_k[fid] = l2_norm(v - v.mean()) / norm_lead if norm_lead >= tol else None
            p_k[fid] = float(v.max() - lead.v[m].max())
        ratios.append(r_k)
        peaks.append(p_k)
        seq = [r_k[f] for f in followers]
        if None in seq:
            continue
        if len(seq) > 1 and all(y > x for x, y in zip(seq, seq[1:])):
            n_amp += 1
        elif all(r <= 1.0 for r in seq):
            n_att += 1
    half = len(spans) / 2
    verdict = "amplifying" if n_amp > half else "attenuating" if n_att > half else "mixed"
    return StabilityMetrics(spans, ratios, peaks, followers, verdict, n_amp)


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """Probability mass over (speed, acceleration) bins, ``mass[i, j]``."""

    v_edges: np.ndarray
    a_edges: np.ndarray
    mass: np.ndarray
    count: int
    clipped: int = 0

    def rows(self):
        vc = 0.5 * (self.v_edges[:-1] + self.v_edges[1:])
        ac = 0.5 * (self.a_edges[:-1] + self.a_edges[1:])
        return [(float(vc[i]), float(ac[j]), float(self.mass[i, j]))
                for i in range(vc.size) for j in range(ac.size)]


def joint_edges(trajectories, v_bin: float = 1.0, a_bin: float = 0.1):
    """Bin edges covering every trajectory, so maps can be compared."""
    v = np.concatenate([tr.v for tr in trajectories])
    a = np.concatenate([tr.acceleration() for tr in trajectories])
    return aligned_edges(v, v_bin), aligned_edges(a, a_bin)


def joint_distribution(traj: Trajectory, v_edges=None, a_edges=None, v_bin: float = 1.0,
                       a_bin: float = 0.1) -> JointDistribution:
    """2D speed-acceleration histogram normalised to unit mass.

    Samples outside the given edges are clipped into the outer bins and
    counted in ``clipped``.
    """
    if len(traj) == 0:
        raise ValueError(f"{traj.vehicle_id}: empty trajectory")
    v, a = traj.v, traj.acceleration()
    v_edges = aligned_edges(v, v_bin) if v_edges is None else np.asarray(v_edges, dtype=float)
    a_edges = aligned_edges(a, a_bin) if a_edges is None else np.asarray(a_edges, dtype=float)
    if np.any(np.diff(v_edges) <= 0) or np.any(np.diff(a_edges) <= 0):
        raise ValueError("bin edges must be strictly increasing")
    out = (v < v_edges[0]) | (v > v_edges[-1]) | (a < a_edges[0]) | (a > a_edges[-1])
    vi = np.clip(np.searchsorted(v_edges, v, side="right") - 1, 0, v_edges.size - 2)
    ai = np.clip(np.searchsorted(a_edges, a, side="right") - 1, 0, a_edges.size - 2)
    counts = np.zeros((v_edges.size - 1, a_edges.size - 1))
    np.add.at(counts, (vi, ai), 1.0)
    return JointDistribution(v_edges, a_edges, counts / counts.sum(), int(v.size), int(out.sum()))


def map_correlation(first: JointDistribution, second: JointDistribution) -> float:
    """Pearson correlation between two maps' flattened cell masses."""
    if not (np.array_equal(first.v_edges, second.v_edges) and np.array_equal(first.a_edges, second.a_edges)):
        raise ValueError("maps have different bin edges")
    x, y = first.mass.ravel(), second.mass.ravel()
    if np.std(x) == 0 or np.std(y) == 0:
        raise ValueError("correlation undefined for a constant map")
    r = np.corrcoef(x, y)[0, 1]
    return float(np.clip(r, -1.0, 1.0))


def correlation_row(dataset: PlatoonDataset, v_bin: float = 1.0, a_bin: float = 0.1) -> dict:
    """Leader-to-vehicle map correlations keyed ``"C1-Ck"``, the leader itself included."""
    v_edges, a_edges = joint_edges(dataset.vehicles, v_bin, a_bin)
    maps = [joint_distribution(tr, v_edges, a_edges) for tr in dataset.vehicles]
    lead = dataset.ids[0]
    return {f"{lead}-{fid}": map_correlation(maps[0], m) for fid, m in zip(dataset.ids, maps)}
