"""POI extraction by stay-point detection.

The classic diameter/duration scan: a stay is a run of points that remain
within d_max_m of its first point for at least t_min_s.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

import numpy as np

import config
from MixTrace.core.geo import GeoPoint, haversine_m
from MixTrace.core.trace import Dataset, Trace
from MixTrace.utils.exceptions import ConfigError, DomainError


@dataclass(frozen=True)
class Poi:
    label: str
    centroid: GeoPoint
    t_start_s: float
    t_end_s: float
    n_points: int

    def __post_init__(self):
        if not self.t_start_s < self.t_end_s:
            raise DomainError(f"POI of {self.label!r} has an empty interval")
        if self.n_points < 2:
            raise DomainError(f"POI of {self.label!r} has {self.n_points} points")


@dataclass(frozen=True)
class AttackParams:
    d_max_m: float = config.D_MAX_M
    t_min_s: float = config.T_MIN_S
    match_radius_m: float = config.MATCH_RADIUS_M

    def __post_init__(self):
        for name in ("d_max_m", "t_min_s", "match_radius_m"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"attack.{name.replace('_', '-')} must be > 0, got {getattr(self, name)}")


def _first_far(lat, lon, i: int, d_max_m: float) -> int:
    """First index after i farther than d_max_m from point i, or len."""
    n = len(lat)
    start, width = i + 1, 32
    while start < n:
        stop = min(n, start + width)
        far = np.flatnonzero(haversine_m(lat[i], lon[i], lat[start:stop], lon[start:stop]) > d_max_m)
        if far.size:
            return start + int(far[0])
        start, width = stop, width * 2
    return n


def extract_stay_points(trace: Trace, params: Optional[AttackParams] = None) -> List[Poi]:
    params = params or AttackParams()
    t, lat, lon = trace.t, trace.lat, trace.lon
    n = len(t)
    pois = []
    i = 0
    while i < n - 1:
        j = _first_far(lat, lon, i, params.d_max_m)
        if t[j - 1] - t[i] >= params.t_min_s:
            pois.append(
                Poi(
                    label=trace.label,
                    centroid=GeoPoint(float(lat[i:j].mean()), float(lon[i:j].mean())),
                    t_start_s=float(t[i]),
                    t_end_s=float(t[j - 1]),
                    n_points=j - i,
                )
            )
            i = j
        else:
            i += 1
    return pois


def extract_dataset_pois(dataset: Dataset, params: Optional[AttackParams] = None) -> Dict[str, List[Poi]]:
    return {trace.label: extract_stay_points(trace, params) for trace in dataset}


def match_count(found: List[Poi], truth: List[Poi], match_radius_m: float) -> int:
    if not found or not truth:
        return 0
    flat = np.array([[p.centroid.lat_deg, p.centroid.lon_deg] for p in found])
    tlat = np.array([[p.centroid.lat_deg, p.centroid.lon_deg] for p in truth])
    d = haversine_m(flat[:, None, 0], flat[:, None, 1], tlat[None, :, 0], tlat[None, :, 1])
    pairs = sorted(
        (float(d[i, j]), i, j) for i, j in zip(*np.nonzero(d <= match_radius_m))
    )
    used_f, used_t = set(), set()
    for _, i, j in pairs:
        if i in used_f or j in used_t:
            continue
        used_f.add(i)
        used_t.add(j)
    return len(used_f)


def match_pois(found: List[Poi], truth: List[Poi], match_radius_m: float) -> Tuple[float, float]:
    """Greedy one-to-one matching by ascending centroid distance.

    Returns (recall, precision); an empty denominator scores 1.0.
    """
    matched = match_count(found, truth, match_radius_m)
    recall = matched / len(truth) if truth else 1.0
    precision = matched / len(found) if found else 1.0
    return recall, precision
