"""Mix-zones found in the data itself.

Users that naturally meet become a zone: a disk around where they met, active
while they were together. Points of the participants inside the active zone
are suppressed and, on exit, the labels of the participants are permuted at
random. Physical trajectories are never moved; only label ownership of each
post-zone suffix changes.
"""

from __future__ import annotations

import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

import config
from MixTrace.core.geo import EARTH_RADIUS_M, GeoPoint, haversine_m, normalize_lon, wrap_delta_lon
from MixTrace.core.trace import Dataset, Trace
from MixTrace.logging import LOGGER
from MixTrace.utils.exceptions import ConfigError, ConsistencyError, DomainError
from MixTrace.utils.spindex import GridIndex

# grid cell edge for pair pruning, in degrees
CELL_DEG = 0.05
MAX_CELLS = 10_000
DEG_M = math.pi * EARTH_RADIUS_M / 180.0


@dataclass(frozen=True)
class MixZoneParams:
    proximity_m: float = config.PROXIMITY_M
    radius_m: float = config.RADIUS_M
    min_copresence_s: float = config.MIN_COPRESENCE_S
    sample_step_s: float = config.SAMPLE_STEP_S
    seed: int = config.SEED

    def __post_init__(self):
        if not self.proximity_m > 0:
            raise ConfigError(f"mixzone.proximity-m must be > 0, got {self.proximity_m}")
        if not self.radius_m > 0:
            raise ConfigError(f"mixzone.radius-m must be > 0, got {self.radius_m}")
        if self.proximity_m > self.radius_m:
            raise ConfigError(
                f"mixzone.proximity-m ({self.proximity_m}) must not exceed mixzone.radius-m ({self.radius_m})"
            )
        if not self.sample_step_s > 0:
            raise ConfigError(f"mixzone.sample-step-s must be > 0, got {self.sample_step_s}")
        if self.min_copresence_s < 0:
            raise ConfigError(f"mixzone.min-copresence-s must be >= 0, got {self.min_copresence_s}")


@dataclass(frozen=True)
class MixZone:
    zone_id: int
    center: GeoPoint
    radius_m: float
    t_enter_s: float
    t_exit_s: float
    participants: Tuple[str, ...]

    def __post_init__(self):
        if not self.t_enter_s < self.t_exit_s:
            raise DomainError(f"Zone {self.zone_id} has an empty interval")
        if not self.radius_m > 0:
            raise DomainError(f"Zone {self.zone_id} has radius {self.radius_m}")
        if len(set(self.participants)) < 2:
            raise DomainError(f"Zone {self.zone_id} needs at least two participants")


@dataclass(frozen=True)
class SwapEvent:
    zone_id: int
    # incoming label -> outgoing label
    permutation: Dict[str, str]
    points_suppressed: int

    def __post_init__(self):
        if sorted(self.permutation) != sorted(self.permutation.values()):
            raise DomainError(f"Zone {self.zone_id} permutation is not a bijection")

    @property
    def labels_in(self) -> Tuple[str, ...]:
        return tuple(self.permutation)

    @property
    def swapped(self) -> bool:
        return any(a != b for a, b in self.permutation.items())


@dataclass
class _Meeting:
    order: int
    a: str
    b: str
    t_enter: float
    t_exit: float
    lat: float
    lon: float
    n: int


class OwnershipTimeline:
    """Which physical trace owns each label over time.

    Every label keeps breakpoints (tau, owner): the owner holds the label for
    t > tau until the next breakpoint. At any instant the label -> owner map
    is a bijection, and permute() keeps it one.
    """

    def __init__(self, labels: Iterable[str]):
        self._taus: Dict[str, List[float]] = {}
        self._owners: Dict[str, List[str]] = {}
        for label in labels:
            self._taus[label] = [-math.inf]
            self._owners[label] = [label]

    @property
    def labels(self) -> List[str]:
        return list(self._taus)

    def owner(self, label: str, t: float) -> str:
        return self._owners[label][bisect_left(self._taus[label], t) - 1]

    def _owner_after(self, label: str, tau: float) -> str:
        return self._owners[label][bisect_right(self._taus[label], tau) - 1]

    def labels_at(self, t: float) -> Dict[str, str]:
        """physical -> label holding it at time t"""
        return {self.owner(label, t): label for label in self._taus}

    def permute(self, tau: float, mapping: Dict[str, str]) -> None:
        """After tau, the suffix that carried label a carries mapping[a]."""
        updates = {}
        for a, b in mapping.items():
            if a == b:
                continue
            ta, oa = self._taus[a], self._owners[a]
            tb, ob = self._taus[b], self._owners[b]
            head = bisect_left(tb, tau)
            tail = bisect_right(ta, tau)
            updates[b] = (
                tb[:head] + [tau] + ta[tail:],
                ob[:head] + [self._owner_after(a, tau)] + oa[tail:],
            )
        for b, (taus, owners) in updates.items():
            self._taus[b], self._owners[b] = taus, owners

    def segments(self, label: str):
        """(after, until, owner) spans; after exclusive, until inclusive."""
        taus, owners = self._taus[label], self._owners[label]
        for k, owner in enumerate(owners):
            until = taus[k + 1] if k + 1 < len(taus) else math.inf
            yield taus[k], until, owner

    def sources(self, label: str, t) -> np.ndarray:
        idx = np.searchsorted(np.asarray(self._taus[label]), np.asarray(t), side="left") - 1
        return np.asarray(self._owners[label], dtype=object)[idx]


def _candidate_pairs(traces: Sequence[Trace], params: MixZoneParams) -> List[Tuple[int, int]]:
    pad_lat = params.proximity_m / DEG_M
    index = GridIndex(CELL_DEG)
    boxes, wide = [], []
    for idx, tr in enumerate(traces):
        lat_min, lat_max = float(tr.lat.min()), float(tr.lat.max())
        lon_min, lon_max = float(tr.lon.min()), float(tr.lon.max())
        coslat = math.cos(math.radians(min(89.0, max(abs(lat_min), abs(lat_max)) + pad_lat)))
        pad_lon = pad_lat / coslat
        box = (lon_min - pad_lon, lat_min - pad_lat, lon_max + pad_lon, lat_max + pad_lat)
        boxes.append(box)
        cells = ((box[2] - box[0]) / CELL_DEG + 1) * ((box[3] - box[1]) / CELL_DEG + 1)
        # antimeridian crossers and huge traces bypass the grid
        if lon_max - lon_min > 180.0 or box[0] < -180.0 or box[2] >= 180.0 or cells > MAX_CELLS:
            wide.append(idx)
        else:
            index.insert(box, idx)

    pairs = set()
    for idx, box in enumerate(boxes):
        others = range(len(traces)) if idx in wide else index.query(box) + wide
        for other in others:
            if other == idx:
                continue
            i, j = min(idx, other), max(idx, other)
            a, b = traces[i], traces[j]
            if a.t[0] <= b.t[-1] and b.t[0] <= a.t[-1]:
                pairs.add((i, j))
    return sorted(pairs)


def _pair_meetings(a: Trace, b: Trace, unwrapped: Dict[str, np.ndarray], params: MixZoneParams, order: int) -> List[_Meeting]:
    lo = max(a.t[0], b.t[0])
    hi = min(a.t[-1], b.t[-1])
    if hi < lo:
        return []
    step = params.sample_step_s
    times = lo + step * np.arange(int(math.floor((hi - lo) / step)) + 1)
    lat_a = np.interp(times, a.t, a.lat)
    lon_a = np.interp(times, a.t, unwrapped[a.label])
    lat_b = np.interp(times, b.t, b.lat)
    lon_b = np.interp(times, b.t, unwrapped[b.label])
    close = haversine_m(lat_a, lon_a, lat_b, lon_b) <= params.proximity_m
    if not close.any():
        return []

    edges = np.flatnonzero(np.diff(np.concatenate(([0], close.astype(np.int8), [0]))))
    out = []
    for start, end in zip(edges[::2], edges[1::2]):
        t_enter = max(lo, times[start] - step / 2)
        t_exit = min(hi, times[end - 1] + step / 2)
        if t_exit <= t_enter or t_exit - t_enter < params.min_copresence_s:
            continue
        sl = slice(start, end)
        mid_lat = (lat_a[sl] + lat_b[sl]) / 2
        ref = lon_a[start]
        mid_lon = ref + wrap_delta_lon((lon_a[sl] + wrap_delta_lon(lon_b[sl] - lon_a[sl]) / 2) - ref)
        out.append(
            _Meeting(
                order=order + len(out),
                a=a.label,
                b=b.label,
                t_enter=float(t_enter),
                t_exit=float(t_exit),
                lat=float(mid_lat.mean()),
                lon=float(mid_lon.mean()),
                n=end - start,
            )
        )
    return out


def _merge(meetings: List[_Meeting], params: MixZoneParams) -> List[MixZone]:
    parent = list(range(len(meetings)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    order = sorted(range(len(meetings)), key=lambda m: (meetings[m].t_enter, m))
    for pos, m in enumerate(order):
        first = meetings[m]
        for m2 in order[pos + 1 :]:
            other = meetings[m2]
            if other.t_enter > first.t_exit:
                break
            if haversine_m(first.lat, first.lon, other.lat, other.lon) <= 2 * params.radius_m:
                parent[find(m2)] = find(m)

    groups: Dict[int, List[_Meeting]] = {}
    for m in range(len(meetings)):
        groups.setdefault(find(m), []).append(meetings[m])

    merged = []
    for members in groups.values():
        total = sum(x.n for x in members)
        ref = members[0].lon
        lat = sum(x.lat * x.n for x in members) / total
        lon = ref + sum(wrap_delta_lon(x.lon - ref) * x.n for x in members) / total
        participants = sorted({x.a for x in members} | {x.b for x in members})
        merged.append(
            (
                min(x.t_enter for x in members),
                min(x.order for x in members),
                max(x.t_exit for x in members),
                GeoPoint(lat, normalize_lon(lon)),
                tuple(participants),
            )
        )
    merged.sort(key=lambda g: (g[0], g[1]))
    return [
        MixZone(
            zone_id=zid,
            center=center,
            radius_m=params.radius_m,
            t_enter_s=t_enter,
            t_exit_s=t_exit,
            participants=participants,
        )
        for zid, (t_enter, _, t_exit, center, participants) in enumerate(merged, start=1)
    ]


def detect_meetings(dataset: Dataset, params: Optional[MixZoneParams] = None) -> List[MixZone]:
    params = params or MixZoneParams()
    traces = list(dataset)
    meetings: List[_Meeting] = []
    pairs = _candidate_pairs(traces, params)
    unwrapped = {tr.label: np.rad2deg(np.unwrap(np.deg2rad(tr.lon))) for tr in traces}
    for i, j in pairs:
        meetings.extend(_pair_meetings(traces[i], traces[j], unwrapped, params, len(meetings)))
    zones = _merge(meetings, params)
    LOGGER(__name__).info(
        f"{len(pairs)} candidate pairs, {len(meetings)} pairwise meetings, {len(zones)} mix-zones."
    )
    return zones


def apply_mix_zones(
    dataset: Dataset, zones: List[MixZone], params: Optional[MixZoneParams] = None
) -> Tuple[Dataset, List[SwapEvent]]:
    params = params or MixZoneParams()
    rng = np.random.default_rng(params.seed)
    keep = {trace.label: np.ones(len(trace), dtype=bool) for trace in dataset}
    timeline = OwnershipTimeline(dataset.labels)
    events = []

    for zone in sorted(zones, key=lambda z: (z.t_enter_s, z.zone_id)):
        suppressed = 0
        for label in zone.participants:
            if label not in dataset:
                raise ConsistencyError(f"Zone {zone.zone_id} names unknown trace {label!r}")
            trace, mask = dataset[label], keep[label]
            idx = np.flatnonzero(mask & (trace.t >= zone.t_enter_s) & (trace.t <= zone.t_exit_s))
            if idx.size:
                d = haversine_m(trace.lat[idx], trace.lon[idx], zone.center.lat_deg, zone.center.lon_deg)
                hit = idx[d <= zone.radius_m]
                mask[hit] = False
                suppressed += len(hit)

        holders = timeline.labels_at(zone.t_exit_s)
        labels_in = [holders[p] for p in zone.participants]
        perm = rng.permutation(len(labels_in))
        mapping = {labels_in[i]: labels_in[int(perm[i])] for i in range(len(labels_in))}
        timeline.permute(zone.t_exit_s, mapping)
        events.append(SwapEvent(zone.zone_id, mapping, suppressed))

    traces, dropped = [], []
    for label in timeline.labels:
        parts = []
        for after, until, owner in timeline.segments(label):
            src = dataset[owner]
            i0 = np.searchsorted(src.t, after, side="right")
            i1 = np.searchsorted(src.t, until, side="right")
            sel = np.arange(i0, i1)[keep[owner][i0:i1]]
            parts.append((src.t[sel], src.lat[sel], src.lon[sel]))
        t = np.concatenate([p[0] for p in parts])
        if len(t) < 2:
            dropped.append(label)
            continue
        traces.append(
            Trace(label, t, np.concatenate([p[1] for p in parts]), np.concatenate([p[2] for p in parts]))
        )

    if dropped:
        LOGGER(__name__).warning(f"Dropped {len(dropped)} traces emptied by mix-zones: {dropped}")
    meta = dict(dataset.meta)
    meta.update(stage="swapped", seed=str(params.seed), dropped_after_mixzones=",".join(dropped))
    return Dataset.from_traces(traces, meta), events


def replay_ownership(labels: Iterable[str], zones: List[MixZone], events: List[SwapEvent]) -> OwnershipTimeline:
    """Rebuild label ownership from an audit, for attributing output points."""
    by_id = {zone.zone_id: zone for zone in zones}
    timeline = OwnershipTimeline(labels)
    for event in sorted(events, key=lambda e: (by_id[e.zone_id].t_enter_s, e.zone_id)):
        timeline.permute(by_id[event.zone_id].t_exit_s, event.permutation)
    return timeline


def zone_audit(zones: List[MixZone], events: List[SwapEvent]) -> List[dict]:
    if len(zones) != len(events):
        raise ConsistencyError(f"{len(zones)} zones but {len(events)} swap events")
    by_id = {event.zone_id: event for event in events}
    records = []
    for zone in sorted(zones, key=lambda z: (z.t_enter_s, z.zone_id)):
        event = by_id.get(zone.zone_id)
        if event is None:
            raise ConsistencyError(f"Zone {zone.zone_id} has no swap event")
        records.append(
            {
                "zone_id": zone.zone_id,
                "center_lat": zone.center.lat_deg,
                "center_lon": zone.center.lon_deg,
                "radius_m": zone.radius_m,
                "t_enter_s": zone.t_enter_s,
                "t_exit_s": zone.t_exit_s,
                "participants": list(event.labels_in),
                "permutation": dict(event.permutation),
                "points_suppressed": event.points_suppressed,
                "swapped": event.swapped,
            }
        )
    return records


def zones_from_audit(records: List[dict]) -> Tuple[List[MixZone], List[SwapEvent]]:
    zones, events = [], []
    for rec in records:
        zones.append(
            MixZone(
                zone_id=int(rec["zone_id"]),
                center=GeoPoint(float(rec["center_lat"]), float(rec["center_lon"])),
                radius_m=float(rec["radius_m"]),
                t_enter_s=float(rec["t_enter_s"]),
                t_exit_s=float(rec["t_exit_s"]),
                participants=tuple(rec["participants"]),
            )
        )
        events.append(
            SwapEvent(int(rec["zone_id"]), {str(k): str(v) for k, v in rec["permutation"].items()}, int(rec["points_suppressed"]))
        )
    return zones, events
